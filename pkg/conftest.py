"""Configura Django para que pytest pueda recolectar las pruebas de las apps."""
import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'hero_vql.settings')
django.setup()
