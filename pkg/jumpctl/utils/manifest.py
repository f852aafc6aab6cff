import os
import time
import datetime

from .git_utils import get_git_rev
from .serialization import save_json, load_json

MANIFEST_VERSION = 1

def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec='seconds')

class RunManifest:
    '''
        record of one command invocation: resolved config, its content hash,
        git revision, timestamps and the artifacts written
    '''

    def __init__(self, config, command, savepath):
        self.config = config
        self.command = command
        self.savepath = savepath
        self.config_hash = config.content_hash()
        self.git_rev = get_git_rev()
        self.started = _now()
        self.finished = None
        self.runtime_minutes = None
        self.artifacts = {}
        self._time0 = time.perf_counter()

    def add(self, name, path):
        self.artifacts[name] = os.path.relpath(path, self.savepath)

    def finish(self):
        self.finished = _now()
        self.runtime_minutes = (time.perf_counter() - self._time0) / 60.
        return self.save()

    def to_dict(self):
        return {
            'version': MANIFEST_VERSION,
            'command': self.command,
            'config': self.config.to_dict(),
            'config_hash': self.config_hash,
            'seed': self.config.seed,
            'git_rev': self.git_rev,
            'started': self.started,
            'finished': self.finished,
            'runtime_minutes': self.runtime_minutes,
            'artifacts': dict(sorted(self.artifacts.items())),
        }

    @staticmethod
    def filename(command):
        ## the training manifest carries the runtime the tables report
        return 'manifest.json' if command == 'train' else f'manifest_{command}.json'

    def save(self):
        return save_json(self.to_dict(), self.savepath, self.filename(self.command))

    @staticmethod
    def load(loadpath, command='train'):
        return load_json(loadpath, RunManifest.filename(command))
