"""Finite-volume toolkit for correctors and homogenized coefficients of
elliptic operators with oscillating (periodic, quasi-periodic, asymptotically
periodic) coefficients."""

from .coefficients import (
    BUILTIN_NAMES,
    ConstantFullField,
    DiagonalField,
    EpsilonScaled,
    GaussianTerm,
    ScalarFieldSpec,
    TrigTerm,
    builtin,
    ellipticity_scan,
    eval_matrix,
    eval_scalar,
    periodic_part,
)
from .corrector import (
    CorrectorEntry,
    CorrectorSet,
    cell_gradient,
    interpolate,
    interpolate_many,
    solve_corrector_set,
    solve_dirichlet_corrector,
    solve_regularized_corrector,
)
from .errors import (
    AssemblyError,
    ConfigError,
    DomainError,
    FactorizationError,
    FvhomError,
    MeshMismatchError,
    SolveError,
    UnsupportedDiscretizationError,
)
from .fo_approx import (
    ErrRow,
    ExperimentConfig,
    err_epsilon,
    first_order_approx,
    run_study,
    solve_homogenized,
    solve_oscillating,
)
from .homogenize import (
    EffectiveMatrix,
    RateTable,
    effective_matrix_dirichlet,
    effective_matrix_regularized,
    eta_delta,
    periodic_cell_effective,
    regularization_study,
    truncation_study,
)
from .linalg import CsrMatrix, SolveReport, bicgstab, cg, ilu0
from .mesh import (
    GridField,
    SparseSystem,
    StructuredMesh,
    assemble_const_full,
    assemble_tpfa,
    build_uniform_mesh,
    discrete_norms,
    dump_grid,
    load_grid,
    transmissibility,
)

__version__ = "0.1.0"
