"""2D time-dependent Ginzburg-Landau solver and vortex-lattice diagnostics."""

from .diagnostics import (BondStats, DiagnosticsRecord, Vortex, VortexSet,
                          bond_statistics, detect_vortices, energy,
                          equilibrium_check, reduced_ode_oracle,
                          refine_vortex_position)
from .fields import (LinkField, Params, State, apply_interface_conditions,
                     apply_outer_boundary, gauge_transform, link_variables,
                     load_checkpoint, load_snapshot, magnetic_field,
                     make_initial_state, refresh_closures, save_checkpoint,
                     save_snapshot, supercurrent)
from .grid import GridConfig, GridError, GridSpec, build_grid, classify
from .integrators import (AlgorithmId, BracketError, LowerBoundUnstable,
                          Scenario, StepperCache, StepReport,
                          UpperBoundStable, adi_solve_psi,
                          find_stability_limit, semigroup_s, step_explicit,
                          step_fully_implicit, step_implicit, step_multirate,
                          step_semi_implicit)
from .linalg import (SolveBreakdown, TridiagSystem, prefactor_constant_systems,
                     solve_cyclic_tridiag, solve_tridiag)

__version__ = "0.1.0"
