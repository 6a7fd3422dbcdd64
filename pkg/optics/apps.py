from django.apps import AppConfig


class OpticsConfig(AppConfig):
    name = "optics"
    verbose_name = "Interference and detector model"
