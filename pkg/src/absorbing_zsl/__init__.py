"""Zero-shot classification with an absorbing Markov chain on a semantic class graph."""

from .baselines import (
    BipartiteSimilarity,
    conse_embed,
    conse_score,
    conse_score_batch,
    ds_score,
    ds_score_batch,
)
from .chain import (
    AbsorptionResult,
    PosteriorMatrix,
    absorbing_probabilities,
    fundamental_matrix,
    load_posteriors,
    score_batch,
    score_single,
    simulate_absorption,
    truncate_topk,
    truncate_topk_rows,
)
from .classify import ScoreReport, auc_binary, evaluate, mean_class_accuracy, predict
from .embed import EmbeddingTable, class_prototype, cosine_similarity, load_embeddings
from .experiment import (
    ExperimentConfig,
    ZSLDataset,
    benchmark_scaling,
    bundled_fixture,
    generate_synthetic,
    run_experiment,
)
from .graph import (
    SemanticGraph,
    TransitionSystem,
    attach_unseen,
    build_seen_subgraph,
    build_semantic_graph,
    transition_system,
)

__version__ = "0.1.0"
