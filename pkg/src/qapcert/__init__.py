"""qapcert: certify target lower bounds for clone-structured QAPs.

Pipeline: parse a QAPLIB instance, collapse clone facilities into a
cardinality-constrained binary quadratic problem, find the automorphism group
of the distance matrix, then run an orbit-branching branch-and-bound that
either proves ``min x'Bx >= target`` or exhibits a cheaper solution.
"""
from .bb import (
    BbConfig,
    BbReport,
    TargetBoundCertifier,
    branch,
    certify,
    score_node_average,
    select_orbit,
)
from .bounding import (
    BounderSpec,
    BracketStep,
    Verdict,
    available_bounders,
    bound_node,
    exact_bound,
    register_bounder,
    spectral_bound,
)
from .estimator import EstimatorConfig, EstimatorReport, TreeSizeEstimator, estimate
from .exceptions import *  # noqa: F401,F403
from .instance import (
    CardBqop,
    QapInstance,
    bqop_objective,
    generate_tai256c_A,
    parse_qaplib,
    parse_solution,
    qap_objective,
    read_qaplib,
    serialize_qaplib,
)
from .reduction import (
    CloneClasses,
    CloneReducer,
    binary_to_permutation,
    emit_general_model,
    find_clones,
    permutation_to_binary,
    reduce_to_bqop,
)
from .subproblem import NodeKey, QuboInstance, ReducedBqop, default_lambda, reduce, to_qubo
from .symmetry import (
    AutomorphismFinder,
    OrbitSet,
    PermutationGroup,
    discover_automorphisms,
    expand_solution,
    orbits,
    setwise_stabilizer,
)

__version__ = "0.1.0"
