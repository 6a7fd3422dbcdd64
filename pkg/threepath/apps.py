from django.apps import AppConfig


class ThreepathConfig(AppConfig):
    name = "threepath"
    verbose_name = "Three-path interferometry laboratory"
