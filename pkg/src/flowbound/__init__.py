"""Toolkit for component-bounded polynomial flows.

Parses polynomial vector fields from plain-text system files, integrates
them forward and backward, checks the per-component linear bound lines
a lower-bounded component implies, exhibits bounded backward orbits
(equilibria, closed orbits) that refute claimed backward divergence,
and certifies chaos through Poincaré sections, unstable periodic orbits,
and Lyapunov spectra.
"""

from importlib import resources
from pathlib import Path

from .boundlaw import (
    VERDICT_FALSIFIED,
    VERDICT_NO_COUNTEREXAMPLE,
    BoundCertificate,
    BoundReport,
    RefutationReport,
    bound_line,
    certified_components,
    combine_reports,
    find_equilibrium,
    refute_nonexistence,
    verify_bounds,
)
from .integrator import (
    BlowUpError,
    IntegrationError,
    IntegrationOptions,
    MaxStepsError,
    StepSizeError,
    Trajectory,
    integrate,
    integrate_with_tangent,
)
from .lyapunov import LyapunovResult, TangentCollapseError, lyapunov_spectrum
from .poincare import (
    NonReturningOrbitError,
    SectionPlane,
    SectionPoint,
    first_crossing,
    first_return,
    return_map_iterates,
)
from .polyfield import (
    Monomial,
    PolyField,
    Polynomial,
    SystemConfigError,
    certify_lower_bound,
    parse_system,
)
from .upo import (
    NewtonConvergenceError,
    PeriodicOrbit,
    RecurrenceSeed,
    ShootOptions,
    census,
    flow_determinant,
    monodromy,
    newton_shoot,
    scan_close_recurrences,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BlowUpError",
    "BoundCertificate",
    "BoundReport",
    "IntegrationError",
    "IntegrationOptions",
    "LyapunovResult",
    "MaxStepsError",
    "Monomial",
    "NewtonConvergenceError",
    "NonReturningOrbitError",
    "PeriodicOrbit",
    "PolyField",
    "Polynomial",
    "RecurrenceSeed",
    "RefutationReport",
    "SectionPlane",
    "SectionPoint",
    "ShootOptions",
    "StepSizeError",
    "SystemConfigError",
    "TangentCollapseError",
    "Trajectory",
    "VERDICT_FALSIFIED",
    "VERDICT_NO_COUNTEREXAMPLE",
    "bound_line",
    "census",
    "certified_components",
    "certify_lower_bound",
    "combine_reports",
    "find_equilibrium",
    "first_crossing",
    "first_return",
    "flow_determinant",
    "integrate",
    "integrate_with_tangent",
    "load_system",
    "lyapunov_spectrum",
    "monodromy",
    "newton_shoot",
    "parse_system",
    "refute_nonexistence",
    "return_map_iterates",
    "scan_close_recurrences",
    "system_path",
    "verify_bounds",
]


def system_path(name: str) -> Path:
    """Filesystem path of a shipped system file (name without .sys)."""
    path = Path(str(resources.files(__package__) / "systems" / f"{name}.sys"))
    if not path.is_file():
        raise FileNotFoundError(f"no shipped system named {name!r}")
    return path


def load_system(name: str) -> PolyField:
    """Parse and return a shipped system by name (e.g. "lorenz")."""
    return parse_system(system_path(name).read_text(encoding="utf-8"))
