"""Facility location under decision-dependent demand ambiguity.

A solver library for a two-stage facility location problem where the
demand distribution is only known through mean and second-moment windows,
and those moments shift with the set of opened facilities.  Includes the
closed-form recourse, the inner worst-case LPs and their duals, the exact
MILP reformulation with McCormick envelopes and feasibility cuts, small
deterministic LP/MILP solvers, and out-of-sample benchmarking utilities.
"""

__version__ = "0.1.0"

from .instance import (DemandModel, Instance, LocationDecision,
                       apply_robustness_level, arithmetic_support, big_lambda,
                       big_lambda_matrix, lambda_from_distance,
                       lambda_rho_means, load_problem, mean_of, means_vector,
                       save_problem, second_moment_window, validate,
                       variance_of, variances_vector)
from .transport import (PENALTY, Allocation, h_closed_form, h_j_closed_form,
                        recover_allocation, second_stage_costs, theta_affine,
                        transport_lp_oracle, unmet_by_customer)
from .worstcase import (AmbiguityInfeasibleError, DualCertificate,
                        FeasibilityReport, WorstCaseDistribution,
                        ambiguity_feasible, check_certificate, dual_value,
                        extreme_rays, worst_case_dual, worst_case_expectation,
                        worst_case_values)
from .milp import (DualBounds, LinearExpr, MilpModel, binding_dual_bounds,
                   build_dddr, build_dr, build_sp_saa, export_lp_text,
                   mccormick_bilinear, mccormick_trilinear, model_stats)
from .solvers import (LpSolution, MipSolution, branch_and_bound,
                      enumerate_oracle, exact_solve, parse_lp_text,
                      simplex_solve, solve_lp_file)
from .benchmarks import (ComparisonConfig, ComparisonResult, EvaluationReport,
                         ScenarioSet, compare_methods, evaluate_plan,
                         gen_gamma, gen_normal, gen_perturbed, train_sp)
from .experiments import (ExperimentConfig, fixture_figure2, generate_instance,
                          run)
