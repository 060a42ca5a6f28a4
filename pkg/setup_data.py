import os
import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'dgda_lab.settings')
django.setup()

from django.conf import settings
from django.contrib.auth.models import User
from django.core.management import call_command

# Create Superuser
if not User.objects.filter(username='admin').exists():
    User.objects.create_superuser('admin', 'admin@example.com', os.environ.get('DGDA_ADMIN_PASSWORD', 'admin123'))
    print("Superuser created: admin")
else:
    print("Superuser already exists")

# Standard synthetic pair: K=4, shift 2.0, rotation 15 degrees, 200 dialogues per domain
data_dir = settings.DGDA_DATA_DIR
for stem in ('standard',):
    if (data_dir / f'{stem}_source.dgdf').exists():
        print(f"Dataset already exists: {stem}")
        continue
    call_command('generate', name=stem, out=str(data_dir))
    print(f"Created dataset: {stem}")

print("Setup complete!")
