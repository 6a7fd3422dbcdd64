from django.apps import AppConfig


class PhotonsimConfig(AppConfig):
    name = "photonsim"
    verbose_name = "Photon counting simulation"
