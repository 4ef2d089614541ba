__version__ = "0.1.0"

from .errors import *
from .params import *
from .signal import *
from .estimation import *
from .detection import *
from .receivers import *
from .link import *
from .traceio import *
from .mempath import MemPath as MemPath
from .config import ExperimentConfig as ExperimentConfig
from .utils import sync as sync
