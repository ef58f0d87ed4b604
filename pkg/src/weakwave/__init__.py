"""Wave equations with singular time coefficients, the computable parts.

The package regularises distributional coefficients with mollifier nets,
checks the algebraic machinery (quasi-symmetrisers, Levi-type bounds) behind
the energy estimates, integrates the frequency-side system, and runs the
finite-difference convergence and blow-up studies.

The headline entry points are re-exported here; the full APIs live in the
topic modules (coeffs, qsym, freq, exact, fdsolve, experiments, cli).
"""

from .coeffs import (
    Jump,
    Mollifier,
    Point,
    ScaleNet,
    Smooth,
    TimeDistribution,
    regularise,
)
from .exact import dalembert_const, eval_exact, sine_data
from .experiments import (
    ExperimentConfig,
    StudyResult,
    consistency_study,
    convergence_study,
    delta_ratio_study,
    emit,
)
from .fdsolve import Grid1D, SolutionField, solve
from .freq import (
    EquationSpec,
    assemble,
    gronwall_verify,
    integrate,
    levi_check,
    lot_bound_check,
    moderateness_sweep,
)
from .qsym import build_Q, nearly_diagonal_constant

__version__ = "0.1.0"

__all__ = [
    "EquationSpec",
    "ExperimentConfig",
    "Grid1D",
    "Jump",
    "Mollifier",
    "Point",
    "ScaleNet",
    "Smooth",
    "SolutionField",
    "StudyResult",
    "TimeDistribution",
    "assemble",
    "build_Q",
    "consistency_study",
    "convergence_study",
    "dalembert_const",
    "delta_ratio_study",
    "emit",
    "eval_exact",
    "gronwall_verify",
    "integrate",
    "levi_check",
    "lot_bound_check",
    "moderateness_sweep",
    "nearly_diagonal_constant",
    "regularise",
    "sine_data",
    "solve",
    "__version__",
]
