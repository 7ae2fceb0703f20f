from django.apps import AppConfig


class AsymptoticsConfig(AppConfig):
    name = 'asymptotics'
    verbose_name = 'Asymptotic probabilities'
