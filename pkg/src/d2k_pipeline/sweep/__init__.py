from .coordinator import (
    CONFIGS_PER_ROUND_DEFAULT,
    SETUPS,
    SweepCoordinator,
    SweepError,
    sample_config,
    validate_search_space,
)
from .protocol import SweepAgentClient, SweepServer, handle_sweep_message

__all__ = [
    "CONFIGS_PER_ROUND_DEFAULT", "SETUPS", "SweepCoordinator", "SweepError",
    "sample_config", "validate_search_space", "SweepAgentClient",
    "SweepServer", "handle_sweep_message",
]
