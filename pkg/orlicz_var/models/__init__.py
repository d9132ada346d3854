# orlicz_var/models/__init__.py
from .verdict import Verdict
from .grid import DiscreteField, Grid
from .mo_function import AnisotropicFamily, MOFunction
from .problem import ProblemSpec, SolveReport
from .config import Config, SolverOptions
