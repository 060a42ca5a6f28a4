"""
WSGI entry point of the experiment registry (served by gunicorn, see render.yaml).
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'dgda_lab.settings')

application = get_wsgi_application()
