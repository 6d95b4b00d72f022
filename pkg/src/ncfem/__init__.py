"""ncfem: nonconforming finite elements for fourth-order semilinear problems
(Morley) and second-order non-selfadjoint indefinite problems (Crouzeix-
Raviart), with Newton-Kantorovich solver diagnostics, explicit residual error
estimators and adaptive newest-vertex bisection."""

from .mesh import (Triangulation, MeshGeometry, build_from_arrays, bisect,
                   uniform_refine, refine, geometry, builtin_domain,
                   read_mesh, write_mesh)
from .quadrature import QuadRule, quad_triangle, quad_edge
from .spaces import (SpaceTag, DofMap, DiscreteFunction, ElementBasis,
                     build_dofmap, element_basis, evaluate)
from .problems import (ProblemKind, ProblemSpec, Field, manufactured,
                       registry_names, ns_unit_load, polynomial_field)
from .assembly import (assemble_a_pw, assemble_b_pw_cr, assemble_load,
                       assemble_residual, assemble_jacobian, gram_matrix,
                       gamma_ns, gamma_vk)
from .interpolation import (morley_interpolate, cr_interpolate, l2_project,
                            oscillation, transfer_morley)
from .solve import (sparse_solve, energy_dual_norm, newton_solve,
                    NewtonTrace, KantorovichReport, kantorovich_report,
                    infsup_constant, gamma_norm_lower_bound,
                    discrete_embedding_ratio, fd_jacobian)
from .estimators import (EstimatorReport, estimate_ns_morley,
                         estimate_vk_morley, cr_apriori_terms,
                         broken_energy_error)
from .afem import (ConvergenceRecord, dorfler_mark, afem_loop, AfemResult,
                   uniform_study, corner_fraction, NewtonDivergence)

__version__ = "0.1.0"
