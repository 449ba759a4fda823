"""Energy-efficiency maximizing precoding and power splitting for a SWIPT
MIMO two-way amplify-and-forward relay network: eigenmode-domain objective,
Dinkelbach/alternating solver, and a Monte-Carlo experiment harness."""

from .model import (
    ChannelMode,
    ChannelRealization,
    NetworkConfig,
    Spectra,
    channel_spectra,
    generate_channels,
)
from .objective import (
    ConstraintReport,
    PrecoderSet,
    SpectrumPoint,
    check_feasibility,
    consumed_power,
    ee_matrix_form,
    energy_efficiency,
    harvested_power,
    rate_tr1,
    rate_tr2,
)
from .solver import (
    EnergyHarvestInfeasible,
    InfeasibleError,
    Solution,
    SolverOptions,
    SolverTrace,
    alternate,
    assemble_precoders,
    dinkelbach,
    multistart,
    optimal_alpha,
)

__version__ = "0.1.0"
