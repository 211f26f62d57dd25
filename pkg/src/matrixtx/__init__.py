"""Molecule release from spherical matrix carriers and the resulting channel
response at an absorbing spherical receiver."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    AccuracyError,
    BracketError,
    ChannelParams,
    ConfigError,
    DomainError,
    GeometryError,
    GridError,
    MatrixParams,
    MatrixTxError,
    ReleaseCurve,
    ResponseCurve,
    TimeGrid,
    erf,
    erfc,
    erfc_inv,
    find_root_monotone,
    integrate,
)
from .release import (  # noqa: E402
    FdmConfig,
    ModelValidityWarning,
    fdm_release_oracle,
    frenning_fraction,
    frenning_front,
    frenning_release_curve,
    instantaneous_fraction,
    instantaneous_release_curve,
    lee_fraction,
    lee_normalized_time,
    lee_release_curve,
    lee_time_of_front,
    micelle_fraction,
    micelle_front,
    micelle_release_curve,
    release_time,
)
from .channel import (  # noqa: E402
    absorbed_fraction_point,
    absorbed_fraction_surface,
    hitting_rate_surface,
    peak_time_point,
)
from .response import (  # noqa: E402
    absorption_rate,
    response_convolution,
    response_instantaneous,
)
from .regimes import (  # noqa: E402
    RegimeReport,
    absorption_time,
    approx_channel_dominated,
    approx_release_dominated,
    classify,
    nrmse,
    percent_deviation,
    regime_ratio,
    tau_closed_form,
)
from .pbs import (  # noqa: E402
    PbsConfig,
    PbsResult,
    simulate_end_to_end,
    simulate_release,
    statistics,
)
