"""Sequential rank-based tests of independence for bivariate streams."""

from .config import SessionConfig
from .errors import *  # noqa: F401,F403
from .session import BUDGET_EXHAUSTED, CONTINUE, REJECT, Session, StepReport, new_session

__version__ = "0.1.0"
