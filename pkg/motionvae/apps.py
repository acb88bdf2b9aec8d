from django.apps import AppConfig


class MotionvaeConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'motionvae'
    verbose_name = 'Motion VAE'
