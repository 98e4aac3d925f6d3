from django.apps import AppConfig


class DatagenAppConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "datagen"
    verbose_name = "graspforge data generation (sampling, episodes, datasets)"
