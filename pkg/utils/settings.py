import os
import json
import logging
from pathlib import Path

logger = logging.getLogger(__name__)

HOME_ENV = "CUEBALL_HOME"


def app_data_dir():
    override = os.environ.get(HOME_ENV)
    if override:
        return override
    return os.path.join(str(Path.home()), ".cueball")


class Settings:
    def __init__(self, app_data_dir_path=None):
        self.app_data_dir = app_data_dir_path or app_data_dir()
        self.settings_file = os.path.join(self.app_data_dir, "settings.json")

        self.default_settings = {
            "images_path": "",
            "store_path": "cueball.store",
            "output_path": "cueball_out",
            "chunk_size": 1000,
            "theta": 100.0,
            "threshold_h": 90.0,
            "precision": "f64",
            "workers": 4,
            "binarize_cutoff": 0,
            "recent_stores": []
        }

        self.settings = self._load_settings()

    def _load_settings(self):
        if os.path.exists(self.settings_file):
            try:
                with open(self.settings_file, "r") as f:
                    loaded = json.load(f)
                settings = self.default_settings.copy()
                settings.update(loaded)
                return settings
            except (OSError, ValueError) as e:
                logger.warning("Ignoring unreadable settings file %s: %s", self.settings_file, e)
                return self.default_settings.copy()
        else:
            settings = self.default_settings.copy()
            self._save_settings(settings)
            return settings

    def _save_settings(self, settings):
        try:
            os.makedirs(self.app_data_dir, exist_ok=True)
            with open(self.settings_file, "w") as f:
                json.dump(settings, f, indent=4)
        except OSError as e:
            logger.warning("Could not write settings to %s: %s", self.settings_file, e)

    def get(self, key, default=None):
        return self.settings.get(key, default)

    def set(self, key, value):
        self.settings[key] = value
        self._save_settings(self.settings)

    def add_recent_store(self, store_path):
        recent = self.settings.get("recent_stores", [])
        store_path = os.path.abspath(store_path)

        if store_path in recent:
            recent.remove(store_path)

        recent.insert(0, store_path)

        if len(recent) > 10:
            recent = recent[:10]

        self.settings["recent_stores"] = recent
        self._save_settings(self.settings)
