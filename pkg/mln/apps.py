from django.apps import AppConfig


class MlnConfig(AppConfig):
    name = 'mln'
    verbose_name = 'Markov logic networks'
