"""Energy-efficient precoding for wideband LEO-satellite integrated sensing and communications."""
from .channel import ArrayGeometry, ChannelStats, SpaceAngle, SubcarrierPlan
from .digital import FullyDigitalPrecoder, SolverOptions, solve_fully_digital
from .hybrid import HybridFactorizer, HybridPrecoder, solve_hybrid
from .metrics import PowerModel, energy_efficiency, rate_upper_bound
from .sensing import TargetSet, detection_probability, sensing_precoder

__version__ = "0.1.0"
__all__ = [
    "ArrayGeometry", "ChannelStats", "SpaceAngle", "SubcarrierPlan", "FullyDigitalPrecoder",
    "SolverOptions", "solve_fully_digital", "HybridFactorizer", "HybridPrecoder", "solve_hybrid",
    "PowerModel", "energy_efficiency", "rate_upper_bound", "TargetSet", "detection_probability",
    "sensing_precoder",
]
