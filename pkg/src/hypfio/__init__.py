"""
Fourier integral operator solver for upper triangular hyperbolic systems
``D_t u = A(t, x, D_x) u + B(t, x, D_x) u + f`` in one space dimension,
with reduction of higher order equations and wavefront tracing.
"""
from .errors import (AliasingWarning, BranchExplosion, CFLViolation, ContractionFailure, DomainError,
                     FlowEscape, H1Violation, NoConvergence, ParseError, RepresentationUnavailable)
from .fio import FioKernel, apply_E, apply_g, apply_g0, make_kernel
from .flow import (AmplitudeTable, FlowMap, PhaseTable, flow_map, hamiltonian_flow, solve_eikonal,
                   solve_transport)
from .grid import ComponentField, GridSpec, SolutionBundle, relative_l2, sobolev_norm
from .hypotheses import SymbolMatrix, check_h1, check_h2, estimate_order
from .parametrix import (Chain, NeumannResult, OperatorChain, estimate_contraction, neumann_apply,
                         representation_operators, solve_2x2, solve_mxm)
from .reduction import (CompanionSystem, HigherOrderProblem, check_theorem_hypotheses, reduce,
                        solve_higher_order, triangularize_2x2)
from .reference import solve_constant_coeff, solve_mol
from .symbols import Expr, differentiate, evaluate, iterated_bracket, parse, poisson_bracket
from .wavefront import (WavefrontPoint, WavefrontSet, propagate_wavefront, scan, seed_wavefront,
                        smoothness_indicator, verify_prediction)

__version__ = "0.1.0"
