"""
Skeleton layouts.

A layout file lists joints in order with their parent, frontal-plane T-pose
coordinates (x lateral, positive to the skeleton's left; y vertical) relative
to the pelvis, and the pooling group each joint belongs to. Depth in the
kinematic tree is derived, never stored.
"""
from dataclasses import dataclass
from functools import lru_cache
import json
import logging
from pathlib import Path

from django.conf import settings

from motionflow.exceptions import FormatError

logger = logging.getLogger(__name__)

# Shipped 15-joint skeleton, also the body model of the synthetic corpus.
REFERENCE15 = Path(__file__).resolve().parent / 'data' / 'reference15.json'

# Latent joints, in latent order.
GROUPS = ('torso', 'pelvis', 'left_arm', 'right_arm', 'left_leg', 'right_leg')


@dataclass(frozen=True)
class Joint:
    name: str
    parent: int | None
    tpose_x: float
    tpose_y: float
    depth: int
    group: str | None = None


@dataclass(frozen=True)
class SkeletonLayout:
    name: str
    joints: tuple
    symmetry_pairs: tuple

    def __post_init__(self):
        self.validate()

    def __len__(self):
        return len(self.joints)

    @property
    def names(self):
        return [joint.name for joint in self.joints]

    @property
    def parents(self):
        return [joint.parent for joint in self.joints]

    @property
    def root(self):
        return next(i for i, joint in enumerate(self.joints) if joint.parent is None)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise FormatError(f'layout {self.name!r} has no joint {name!r}') from None

    def edges(self):
        return [(joint.parent, i) for i, joint in enumerate(self.joints) if joint.parent is not None]

    def group_assignment(self):
        """Group index (into GROUPS) of every joint."""
        missing = [joint.name for joint in self.joints if joint.group not in GROUPS]
        if missing:
            raise FormatError(f'joints without a valid pooling group: {", ".join(missing)}')
        return [GROUPS.index(joint.group) for joint in self.joints]

    def validate(self):
        roots = [i for i, joint in enumerate(self.joints) if joint.parent is None]
        if len(roots) != 1:
            raise FormatError(f'a layout needs exactly one root, found {len(roots)}')
        root = self.joints[roots[0]]
        if root.depth != 0 or (root.tpose_x, root.tpose_y) != (0.0, 0.0):
            raise FormatError('the root joint must sit at the origin with depth 0')
        for joint in self.joints:
            if joint.parent is not None and joint.depth != self.joints[joint.parent].depth + 1:
                raise FormatError(f'joint {joint.name!r} has an inconsistent depth')
        for left, right in self.symmetry_pairs:
            a, b = self.joints[left], self.joints[right]
            mirrored = (
                abs(a.tpose_x + b.tpose_x) < 1e-9
                and abs(a.tpose_y - b.tpose_y) < 1e-9
                and a.depth == b.depth
            )
            if not mirrored:
                raise FormatError(f'joints {a.name!r} and {b.name!r} are not mirror images')


def _depths(parents):
    depths = [None] * len(parents)

    def depth_of(i, seen=()):
        if depths[i] is not None:
            return depths[i]
        if i in seen:
            raise FormatError('the joint hierarchy contains a cycle')
        parent = parents[i]
        depths[i] = 0 if parent is None else depth_of(parent, seen + (i,)) + 1
        return depths[i]

    return [depth_of(i) for i in range(len(parents))]


def layout_from_dict(data):
    try:
        entries = data['joints']
        names = [entry['name'] for entry in entries]
        index = {name: i for i, name in enumerate(names)}
        if len(index) != len(names):
            raise FormatError('joint names must be unique')
        parents = [None if entry.get('parent') is None else index[entry['parent']] for entry in entries]
        depths = _depths(parents)
        joints = tuple(
            Joint(
                name=entry['name'],
                parent=parents[i],
                tpose_x=float(entry['tpose'][0]),
                tpose_y=float(entry['tpose'][1]),
                depth=depths[i],
                group=entry.get('group'),
            )
            for i, entry in enumerate(entries)
        )
        pairs = tuple((index[left], index[right]) for left, right in data.get('symmetry', []))
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise FormatError(f'malformed skeleton layout: {exc}') from exc
    return SkeletonLayout(name=data.get('name', 'skeleton'), joints=joints, symmetry_pairs=pairs)


def layout_to_dict(layout):
    """Inverse of `layout_from_dict`; depths are left to be derived."""
    names = layout.names
    return {
        'name': layout.name,
        'joints': [
            {
                'name': joint.name,
                'parent': None if joint.parent is None else names[joint.parent],
                'tpose': [joint.tpose_x, joint.tpose_y],
                'group': joint.group,
            }
            for joint in layout.joints
        ],
        'symmetry': [[names[left], names[right]] for left, right in layout.symmetry_pairs],
    }


def load_layout(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f'{path} is not valid JSON: {exc}') from exc
    layout = layout_from_dict(data)
    logger.debug('Loaded skeleton %s with %d joints from %s', layout.name, len(layout), path)
    return layout


@lru_cache(maxsize=None)
def reference_layout():
    """The skeleton configured by MOTIONFLOW_SKELETON (15 joints by default)."""
    return load_layout(settings.MOTIONFLOW_SKELETON)


@lru_cache(maxsize=None)
def synthetic_layout():
    """The 15-joint skeleton the corpus generator is built on."""
    return load_layout(REFERENCE15)


def pooled_layout(layout):
    """The six-joint latent skeleton obtained by pooling `layout` by group.

    Each latent joint sits at the centroid of its members; its parent is the
    group holding the parent of the group's shallowest member.
    """
    assignment = layout.group_assignment()
    members = {g: [i for i, a in enumerate(assignment) if a == g] for g in range(len(GROUPS))}
    empty = [GROUPS[g] for g, idx in members.items() if not idx]
    if empty:
        raise FormatError(f'pooling groups without joints: {", ".join(empty)}')

    entries = []
    for g, idx in members.items():
        top = min(idx, key=lambda i: layout.joints[i].depth)
        parent_joint = layout.joints[top].parent
        parent = None if parent_joint is None else GROUPS[assignment[parent_joint]]
        xs = [layout.joints[i].tpose_x for i in idx]
        ys = [layout.joints[i].tpose_y for i in idx]
        entries.append({
            'name': GROUPS[g],
            'parent': parent,
            'tpose': [sum(xs) / len(xs), sum(ys) / len(ys)],
            'group': GROUPS[g],
        })

    # groups whose members are all mirrored become mirrored latent joints
    mirror = {}
    for left, right in layout.symmetry_pairs:
        mirror[left], mirror[right] = right, left
    pairs = []
    for g, idx in members.items():
        partners = {assignment[mirror[i]] for i in idx if i in mirror}
        if len(partners) == 1 and len(idx) == len(members[next(iter(partners))]):
            other = next(iter(partners))
            if g < other and all(i in mirror for i in idx):
                pairs.append([GROUPS[g], GROUPS[other]])

    return layout_from_dict({'name': f'{layout.name}-pooled', 'joints': entries, 'symmetry': pairs})
