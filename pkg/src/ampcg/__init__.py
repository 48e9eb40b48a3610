"""Discrete AMP chain graphs: separation, factorization, exact inference and
parameter learning."""
from .graph import ChainGraph, GraphError, cliques, complete_sets, marginal_graph, validate
from .factor import Dataset, Factor, FactorError
from .factorization import (FactorizedModel, build_joint, canonical_parameterize,
                            check_markov_conditions, factorize, generate_markovian)
from .separation import find_open_path, separated
from .inference import (ImpossibleEvidence, InferenceError, JunctionTree, build_tree, moralize,
                        probability_of_evidence, propagate, query)
from .learning import (FitReport, LearningError, closed_form_fit, ipfp_fit, loglik,
                       markov_blanket, merged_domain_ipfp)
from .eamp import (assign_potentials, check_separation_equivalence, demonstrate_nonuniversality,
                   marginalize_errors, to_eamp)

__all__ = [
    "ChainGraph", "GraphError", "cliques", "complete_sets", "marginal_graph", "validate",
    "Dataset", "Factor", "FactorError",
    "FactorizedModel", "build_joint", "canonical_parameterize", "check_markov_conditions",
    "factorize", "generate_markovian",
    "find_open_path", "separated",
    "ImpossibleEvidence", "InferenceError", "JunctionTree", "build_tree", "moralize",
    "probability_of_evidence", "propagate", "query",
    "FitReport", "LearningError", "closed_form_fit", "ipfp_fit", "loglik", "markov_blanket",
    "merged_domain_ipfp",
    "assign_potentials", "check_separation_equivalence", "demonstrate_nonuniversality",
    "marginalize_errors", "to_eamp",
]
__version__ = "0.1.0"
