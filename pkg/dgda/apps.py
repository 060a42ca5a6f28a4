from django.apps import AppConfig


class DgdaConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'dgda'
    verbose_name = 'Domain adaptation lab'
