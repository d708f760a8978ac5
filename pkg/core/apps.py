from django.apps import AppConfig


class CoreConfig(AppConfig):
    """Numerical library: autodiff, audio frontend, networks and distillation. No tables."""
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'core'
    verbose_name = 'KD core'
