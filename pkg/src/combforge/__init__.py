"""combforge: quantum combs, testers, and certificates of incompatibility."""

__version__ = "0.1.0"

from .errors import (
    BadProbability,
    CapExceeded,
    CausalityViolation,
    CombForgeError,
    DegenerateRobustness,
    IndexCollision,
    IndexNotFound,
    NormalizationViolation,
    NotAChannel,
    NotAState,
    NotPositive,
    ProbeNotNormalized,
    SchemaError,
    SignatureMismatch,
    SolverFailure,
    ZeroDual,
)
from .systems import (
    CombSignature,
    HermitianOperator,
    embed_identity,
    identity,
    inv_sqrt_support,
    kron_compose,
    link_product,
    min_eigenvalue,
    partial_trace,
)
from .combs import (
    CombEnsemble,
    EnsembleCollection,
    QuantumComb,
    comb_from_network,
    identity_comb,
    random_comb,
    validate_comb,
)
from .testers import (
    PostProcessing,
    Povm,
    QuantumTester,
    TesterCollection,
    born_probabilities,
    canonical_povm,
    mix_testers,
    mub_pair,
    random_tester,
    random_tester_collection,
    simulate_collection,
    tester_from_network,
    validate_tester,
)
from .incompatibility import (
    CompatibilityReport,
    NoiseDecomposition,
    RobustnessCertificate,
    WeightCertificate,
    convex_weight,
    is_compatible_collection,
    reconstruct_noise_testers,
    robustness,
)
from .games import (
    GameReport,
    ensemble_from_robustness_dual,
    ensemble_from_weight_witness,
    exclusion_value,
    exclusion_value_compatible,
    qcd_value_compatible,
    qcd_value_incompatible,
    random_comb_deck,
    verify_theorem1,
    verify_theorem2,
)
from .cli import ExperimentConfig, run
