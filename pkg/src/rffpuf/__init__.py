"""RFF-PUF authentication and key exchange for drone networks, as a deterministic simulator."""

from .netsim import ConfigError, Simulator, load_config, run_simulation
from .symbolic import KnowledgeBase, knowledge_closure

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "KnowledgeBase",
    "Simulator",
    "knowledge_closure",
    "load_config",
    "run_simulation",
]
