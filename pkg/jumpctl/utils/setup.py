import os
import sys
import random
from typing import Optional

import numpy as np
import torch
from tap import Tap

from .config import load_config
from .errors import ConfigError

COMMANDS = ('train', 'benchmark', 'evaluate', 'plot-data', 'table')

def set_seed(seed):
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)

class Parser(Tap):
    command: str
    config: str  # path to a json config document
    seed: Optional[int] = None  # overrides the config seed
    out: Optional[str] = None  # overrides the config output directory
    verbose: bool = False

    def configure(self):
        self.add_argument('command', choices=COMMANDS)

    def error(self, message):
        ## argparse exits with 2, which is reserved for numerical failures
        self.print_usage(sys.stderr)
        self.exit(1, f'{self.prog}: error: {message}\n')

    def read_config(self):
        '''
            load the config document and apply `--seed` / `--out`
        '''
        if not os.path.isfile(self.config):
            raise ConfigError('config', f'no such file: {self.config}')
        config = load_config(self.config)
        overrides = {}
        if self.seed is not None:
            overrides['seed'] = self.seed
        if self.out is not None:
            overrides['out'] = self.out
        if overrides:
            config = config.replace(**overrides)
        print(f'[ utils/setup ] Read config: {self.config} | problem: {config.problem} | seed: {config.seed}')
        return config
