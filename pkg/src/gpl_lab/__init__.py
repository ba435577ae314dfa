"""Desk-scale laboratory for backdoor attacks on graph prompt learning."""

from .graph import (
    AnchorChoice,
    Graph,
    PromptGraph,
    TriggerGraph,
    attach_prompt_crosslinked,
    attach_prompt_isolated,
    attach_trigger,
    augment_links,
    cosine_sim,
    induced_subgraph,
)
from .encoders import (
    EncoderConfig,
    EncoderParams,
    LinearGinParams,
    encode_graph,
    encode_nodes,
    init_encoder,
    linear_gin_encode,
    readout,
)
from .pretraining import PretrainConfig, contrastive_loss, link_prediction_loss, train_clean_encoder
from .attack import (
    AttackConfig,
    AttackState,
    affinity_loss,
    align_loss,
    backdoor_loss,
    gcba_select_target,
    run_crossba,
    run_gcba,
    tune_encoder_step,
    tune_trigger_step,
)
from .prompting import (
    FewShotSet,
    PromptState,
    few_shot_tune,
    graphprompt_readout,
    predict,
    prog_forward,
)
from .scenarios import (
    MasterGraph,
    ScenarioSplit,
    SynthConfig,
    build_induced_dataset,
    gen_synthetic_corpus,
    load_dataset,
    make_split,
    partition_by_clustering,
    svd_reduce,
)
from .defense import PruneConfig, edge_similarity_profile, prune_g
from .evaluation import (
    MetricsReport,
    PipelineConfig,
    compute_acc_ad,
    compute_asr,
    resolve_target_class,
    run_pipeline,
)
from .theory import (
    TheoryConfig,
    anchored_classifier,
    delta_feat_prompt,
    kernel_distance,
    least_squares_oracle,
    norm_bound_check,
    prompt_equivalence_check,
    proposition_behavior_check,
)

__version__ = "0.1.0"
