from django.db import models
from django.utils import timezone
from pathlib import Path
import hashlib
import uuid


class Run(models.Model):
    """One invocation of a pipeline command"""

    STATUS_CHOICES = [
        ('running', 'Running'),
        ('succeeded', 'Succeeded'),
        ('failed', 'Failed'),
    ]

    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    command = models.CharField(max_length=50)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='running')
    seed = models.BigIntegerField(null=True, blank=True)
    config = models.JSONField(default=dict, blank=True)
    output_dir = models.CharField(max_length=500, blank=True)
    exit_code = models.IntegerField(null=True, blank=True)
    error = models.TextField(blank=True)
    started_at = models.DateTimeField(default=timezone.now)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        ordering = ['-started_at']

    def __str__(self):
        return f"{self.command} ({self.status}) {self.started_at:%Y-%m-%d %H:%M:%S}"

    @property
    def duration(self):
        """Wall time in seconds, or None while running"""
        if self.finished_at is None:
            return None
        return (self.finished_at - self.started_at).total_seconds()

    def finish(self, exit_code=0, error=''):
        self.exit_code = exit_code
        self.error = error
        self.status = 'succeeded' if exit_code == 0 else 'failed'
        self.finished_at = timezone.now()
        self.save(update_fields=['exit_code', 'error', 'status', 'finished_at'])

    def add_artifact(self, kind, path):
        path = Path(path)
        data = path.read_bytes()
        return Artifact.objects.create(
            run=self,
            kind=kind,
            path=str(path),
            sha256=hashlib.sha256(data).hexdigest(),
            size=len(data),
        )


class Artifact(models.Model):
    """A file a run wrote"""

    KIND_CHOICES = [
        ('config', 'Config'),
        ('corpus', 'Corpus'),
        ('checkpoint', 'Checkpoint'),
        ('motions', 'Generated motions'),
        ('table', 'Table'),
        ('report', 'Report'),
    ]

    run = models.ForeignKey(Run, on_delete=models.CASCADE, related_name='artifacts')
    kind = models.CharField(max_length=20, choices=KIND_CHOICES)
    path = models.CharField(max_length=500)
    sha256 = models.CharField(max_length=64)
    size = models.BigIntegerField(default=0)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['created_at']

    def __str__(self):
        return f"{self.kind}: {self.path}"
