from django.apps import AppConfig


class TmditConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'tmdit'
    verbose_name = 'TMDiT velocity model'
