"""Currency-network dedollarization simulator and reserve-currency regressions."""

__version__ = "0.1.0"

from .simcore import ConfigError, Currency, Graph, SimConfig, WorldState, build_network
from .ensemble import monte_carlo, run_simulation

__all__ = ["ConfigError", "Currency", "Graph", "SimConfig", "WorldState", "build_network",
           "monte_carlo", "run_simulation", "__version__"]
