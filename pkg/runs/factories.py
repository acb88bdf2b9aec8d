import factory
from django.utils import timezone

from .models import Artifact, Run


class RunFactory(factory.django.DjangoModelFactory):
    class Meta:
        model = Run

    command = 'gen_data'
    status = 'running'
    seed = factory.Sequence(lambda n: n)
    config = factory.LazyAttribute(lambda run: {'seed': run.seed})
    output_dir = factory.LazyAttribute(lambda run: f'outputs/{run.command}')
    started_at = factory.LazyFunction(timezone.now)


class ArtifactFactory(factory.django.DjangoModelFactory):
    class Meta:
        model = Artifact

    run = factory.SubFactory(RunFactory)
    kind = 'report'
    path = factory.Sequence(lambda n: f'outputs/report_{n}.json')
    sha256 = factory.Faker('sha256')
    size = factory.Faker('pyint', min_value=1, max_value=4096)
