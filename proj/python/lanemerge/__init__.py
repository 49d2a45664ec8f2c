from ._lanemerge import *  # noqa: F401,F403
from ._lanemerge import __version__  # noqa: F401
