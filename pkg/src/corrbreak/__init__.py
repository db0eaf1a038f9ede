"""Eigenvalue fluctuation test for structural breaks in correlation matrices."""

from .changetest import (
    ConfigError,
    Decision,
    NullLaw,
    TestTrajectory,
    critical_value,
    decide,
    null_pdf,
    trajectory,
)
from .eigen import (
    ConvergenceError,
    CubicIntermediates,
    EigenError,
    EigenSpectrum,
    cubic_intermediates,
    eig2,
    eig3,
    eig_sym,
)
from .panel import (
    CorrelationMatrix,
    DegeneratePrefixError,
    PanelError,
    ReturnPanel,
    StandardizedPanel,
    load_panel,
    prefix_correlation,
    standardize,
)
from .powersim import (
    AlternativeSpec,
    AnalyticLaw,
    analytic_double_change,
    analytic_single_change,
    presets,
    sample_panel,
    size_adjusted_power,
)

__version__ = "0.1.0"
