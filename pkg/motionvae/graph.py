"""Skeleton graph operators: normalized adjacency, pooling and unpooling."""
from dataclasses import dataclass

import torch
import torch.nn as nn

from skeleton.layout import GROUPS


@dataclass(frozen=True)
class GraphSpec:
    adjacency: torch.Tensor    # [J, J], symmetric-normalized with self-loops
    assignment: torch.Tensor   # [J, G], one-hot rows
    names: tuple

    @classmethod
    def from_layout(cls, layout):
        return cls(
            adjacency=normalized_adjacency(layout),
            assignment=assignment_matrix(layout),
            names=tuple(layout.names),
        )

    @property
    def n_joints(self):
        return self.adjacency.shape[0]

    @property
    def n_groups(self):
        return self.assignment.shape[1]

    def pooling(self):
        """[G, J]: each row averages the members of one group."""
        counts = self.assignment.sum(dim=0, keepdim=True)
        return (self.assignment / counts).T


def normalized_adjacency(layout):
    J = len(layout)
    A = torch.eye(J, dtype=torch.float64)
    for parent, child in layout.edges():
        A[parent, child] = A[child, parent] = 1.0
    d = A.sum(dim=1).rsqrt()
    return d[:, None] * A * d[None, :]


def assignment_matrix(layout):
    groups = layout.group_assignment()
    M = torch.zeros(len(layout), len(GROUPS), dtype=torch.float64)
    M[torch.arange(len(layout)), torch.tensor(groups)] = 1.0
    return M


class GraphConv(nn.Module):
    """x -> A x W + b over the joint axis of [..., J, C] inputs."""

    def __init__(self, adjacency, in_channels, out_channels):
        super().__init__()
        self.register_buffer('adjacency', adjacency.clone().float())
        self.linear = nn.Linear(in_channels, out_channels)

    def forward(self, x):
        mixed = torch.einsum('ij,...jc->...ic', self.adjacency.to(x.dtype), x)
        return self.linear(mixed)
