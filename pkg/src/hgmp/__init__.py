"""Few-shot learning on heterogeneous graphs.

Pipeline: reformulate node/edge labels as labeled ego subgraphs, pre-train a
type-aware encoder contrastively with count-weighted augmentation, freeze
it, then adapt to a k-shot episode by tuning per-type feature prompts and a
linear head only.
"""

from .augment import (
    AugmentConfig,
    AugmentView,
    adjusted_edge_ratios,
    adjusted_node_ratios,
    apply_edge_permutation,
    apply_node_masking,
    make_views,
    num_to_mask,
    num_to_permute,
)
from .checkpoint import read_checkpoint, write_checkpoint
from .config import RunConfig, config_from_dict, load_config, save_config
from .encoder import (
    GraphEmbedding,
    HetEncoder,
    PackedGraphs,
    encode_graph,
    freeze,
    init_encoder,
    load_encoder,
    project_head,
    save_encoder,
)
from .errors import DataFormatError, HgmpError
from .experiments import (
    RunResult,
    build_tasks,
    check_ablation_ordering,
    evaluate_encoder,
    load_results_csv,
    macro_f1,
    micro_f1,
    pretrain_encoder,
    run_ablation,
    run_task,
    shot_sweep,
    summarize,
    write_results_csv,
)
from .hetgraph import (
    EdgeType,
    GraphSchema,
    HetGraph,
    NodeType,
    load_graph,
    save_graph,
    type_counts,
    validate,
)
from .pretrain import PretrainConfig, contrastive_loss, pretrain
from .prompt import (
    PromptBank,
    TaskHead,
    apply_prompts,
    init_head,
    init_prompts,
    load_prompt_state,
    predict,
    predict_many,
    save_prompt_state,
    score_many,
    tune,
)
from .synthetic import SyntheticSpec, generate_synthetic
from .taskbuilder import (
    FewShotTask,
    InducedSubgraph,
    build_edge_tasks,
    build_node_tasks,
    build_pretrain_corpus,
    edge_induced_subgraph,
    node_induced_subgraph,
    sample_k_shot,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig", "AugmentView", "adjusted_edge_ratios", "adjusted_node_ratios",
    "apply_edge_permutation", "apply_node_masking", "make_views", "num_to_mask",
    "num_to_permute",
    "read_checkpoint", "write_checkpoint",
    "RunConfig", "config_from_dict", "load_config", "save_config",
    "GraphEmbedding", "HetEncoder", "PackedGraphs", "encode_graph", "freeze",
    "init_encoder", "load_encoder", "project_head", "save_encoder",
    "DataFormatError", "HgmpError",
    "RunResult", "build_tasks", "check_ablation_ordering", "evaluate_encoder",
    "load_results_csv", "macro_f1", "micro_f1", "pretrain_encoder",
    "run_ablation", "run_task", "shot_sweep", "summarize", "write_results_csv",
    "EdgeType", "GraphSchema", "HetGraph", "NodeType", "load_graph", "save_graph",
    "type_counts", "validate",
    "PretrainConfig", "contrastive_loss", "pretrain",
    "PromptBank", "TaskHead", "apply_prompts", "init_head", "init_prompts",
    "load_prompt_state", "predict", "predict_many", "save_prompt_state",
    "score_many", "tune",
    "SyntheticSpec", "generate_synthetic",
    "FewShotTask", "InducedSubgraph", "build_edge_tasks", "build_node_tasks",
    "build_pretrain_corpus", "edge_induced_subgraph", "node_induced_subgraph",
    "sample_k_shot",
    "__version__",
]
