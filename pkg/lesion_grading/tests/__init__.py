import os
import yaml
from .. import settings


local_settings_path = 'local.tests.yaml'

if os.path.exists(local_settings_path):
    with open(local_settings_path, 'r') as f:
        settings.update(yaml.safe_load(f.read()) or {})
