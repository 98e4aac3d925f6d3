from django.apps import AppConfig


class SimAppConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "sim"
    verbose_name = "graspforge simulation (geometry, hand, contact sim, skill)"
