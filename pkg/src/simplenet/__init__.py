"""SimpleNet CNN kit: numpy layers, architecture presets, cost model and design lint."""
from .archspec import ArchSpec, LayerSpec, parse_arch, preset, render_arch, validate
from .estimator import ChannelStandardizer, SimpleNetClassifier
from .network import Network, build, evaluate
from .stats import StatsReport, analyze

__all__ = [
    "ArchSpec", "LayerSpec", "parse_arch", "preset", "render_arch", "validate",
    "ChannelStandardizer", "SimpleNetClassifier", "Network", "build", "evaluate",
    "StatsReport", "analyze",
]
__version__ = "0.1.0"
