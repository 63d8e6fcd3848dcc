"""Forward solution and inverse identification of finite-horizon LQG differential games."""

from .costs import identify_costs
from .errors import (
    AmbiguousIdentificationError,
    ConfigError,
    DegenerateNoiseError,
    IdentifiabilityError,
    IndefiniteEstimateError,
    InvLQGError,
    NumericalError,
    RiccatiDivergenceError,
    SimulationExplosionError,
    ValidationError,
)
from .model import (
    CostParameters,
    GameDefinition,
    NoiseModel,
    StrategyProfile,
    TrajectoryBundle,
    validate,
)
from .noise import estimate_noise
from .pipeline import InversionResult, invert
from .riccati import RiccatiSolverConfig, check_stability, solve_coupled_riccati
from .simulate import SimulationConfig, empirical_moments, simulate_bundle
from .strategy import estimate_gains

__version__ = "0.1.0"
