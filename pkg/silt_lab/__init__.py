__version__ = "0.1.0"

from . import (cache, decomposition, experiments, generic, logging, oracle, pandas, rare_event, rwrs, silt,
               walk)

__all__ = ["cache", "decomposition", "experiments", "generic", "logging", "oracle", "pandas", "rare_event", "rwrs",
           "silt", "walk", "__version__"]
