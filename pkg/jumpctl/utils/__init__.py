from .errors import *
from .serialization import *
from .progress import *
from .setup import *
from .config import *
from .arrays import *
from .logger import *
from .timer import Timer
from .manifest import RunManifest
