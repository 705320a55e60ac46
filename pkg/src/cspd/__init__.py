"""Cross-subcarrier precoder design by dissipative constrained Hamiltonian dynamics."""

__version__ = "0.1.0"

from .channel import ChannelSet, generate_channel
from .config import SystemConfig
from .objective import PrecoderStack, evaluate
from .symplectic import optimize
from .wmmse import wmmse_solve

__all__ = [
    "ChannelSet",
    "PrecoderStack",
    "SystemConfig",
    "evaluate",
    "generate_channel",
    "optimize",
    "wmmse_solve",
    "__version__",
]
