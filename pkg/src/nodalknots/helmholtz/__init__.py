"""Even Helmholtz fields whose zero sets contain a prescribed link."""
from .fields import *  # noqa: F401,F403
from .fit import *  # noqa: F401,F403
from .greens import *  # noqa: F401,F403
from .seeds import *  # noqa: F401,F403
from . import fields, fit, greens, seeds

__all__ = fields.__all__ + fit.__all__ + greens.__all__ + seeds.__all__
