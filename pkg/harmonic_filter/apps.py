from django.apps import AppConfig


class HarmonicFilterConfig(AppConfig):
    name = 'harmonic_filter'
