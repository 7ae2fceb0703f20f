from django.apps import AppConfig


class RlrConfig(AppConfig):
    name = 'rlr'
    verbose_name = 'Relational logistic regression'
