# orlicz_var/services/__init__.py
from .data_manager import DataManager
from .config_loader import build_problem, load_config
