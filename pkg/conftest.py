"""
Global pytest configuration for the relscale project.

Sets up Django (settings, caches, logging) before collection so every test
module can use the engines, the memo cache and the management commands.
"""
import os
import django


def pytest_configure():
    """Configure Django settings for pytest."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'etc.settings')
    os.environ.setdefault('RELSCALE_LOG_LEVEL', 'WARNING')
    django.setup()
