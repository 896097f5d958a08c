"""Model builders for integrated, master and cluster problems."""
from .builders import (BundleSolution, ModelBundle, build_integrated, build_master,
                       build_subproblem, fix_binaries_and_minimize, solve_bundle)
from .cuts import EXACT, FEASIBILITY, OPTIMALITY, CARDINALITY, CutRecord, encode_cut
from .encoders import (ObjectiveTerms, PowerFlowScope, build_objective, encode_conditional,
                       encode_disjunction, encode_distflow, encode_either_or, encode_links,
                       encode_load_pickup, encode_radiality, encode_socp_powerflow,
                       orientation)
from .types import (LEXICOGRAPHIC, WEIGHTED, BigMPolicy, DistFlowRelaxation, ObjectiveWeights,
                    VariableAtlas)
