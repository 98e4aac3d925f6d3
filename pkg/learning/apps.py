from django.apps import AppConfig


class LearningAppConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "learning"
    verbose_name = "graspforge learning (residual PPO, behavior cloning, evaluation)"
