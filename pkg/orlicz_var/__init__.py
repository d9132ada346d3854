# orlicz_var/__init__.py
from .core.config import settings

__version__ = settings.VERSION
