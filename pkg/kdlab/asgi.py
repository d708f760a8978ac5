"""ASGI entry point for the kdlab run browser API."""

import os

from django.core.asgi import get_asgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'kdlab.settings')

application = get_asgi_application()
