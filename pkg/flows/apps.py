from django.apps import AppConfig


class FlowsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'flows'
    verbose_name = 'Hierarchical flows'
