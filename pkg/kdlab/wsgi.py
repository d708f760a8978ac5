"""WSGI entry point for the kdlab run browser API."""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'kdlab.settings')

application = get_wsgi_application()
