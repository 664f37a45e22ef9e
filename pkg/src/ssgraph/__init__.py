"""Self-supervised graph representation learning at desk scale.

The package trains node embeddings on CSR graphs with three objectives —
bootstrapped cross-view prediction with a moving-average target encoder
("bgrl"), subsampled contrastive InfoNCE ("grace"), and a semi-supervised
minibatch combination — and evaluates them with a frozen linear probe,
collapse diagnostics, and a cost-accounting harness.
"""

from .augment import AugmentationConfig, View, make_views, mask_edges, mask_features
from .bgrl import BgrlSettings, BgrlState, BgrlTrainer, bgrl_loss, train_bgrl
from .config import PRESETS, RunConfig, apply_preset
from .evaluate import (CostModel, ProbeConfig, attention_entropy_histogram,
                       embed_frozen, linear_probe, measure_peak_activation,
                       predict_cost, random_init_baseline)
from .grace import GraceConfig, GraceTrainer, grace_loss, train_grace
from .graphs import (Dataset, Graph, NormalizedGraph, SplitMask, generate_sbm,
                     graph_from_arcs, normalize, random_split)
from .metrics import MetricsRecord, embedding_spread, mean_embedding_norm
from .minibatch import (BatchSpec, FanoutSpec, SemisupTrainer, Subgraph,
                        sample_neighborhood, supervised_trainer)
from .nn import EncoderConfig, ParamSet, build_encoder, ema_update
from .optim import AdamWState, ScheduleConfig, adamw_step, learning_rate_at, tau_at
from .storage import load_dataset, load_dataset_dir, save_dataset

__version__ = "0.1.0"
