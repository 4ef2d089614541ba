from .detector import *
from .io import *
