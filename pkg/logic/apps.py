from django.apps import AppConfig


class LogicConfig(AppConfig):
    name = 'logic'
    verbose_name = 'Relational logic core'
