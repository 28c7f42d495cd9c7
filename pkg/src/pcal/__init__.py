"""Interactive point-cloud part annotation with few-shot fine-tuning."""

from .geom import (PointCloud, SpatialIndex, build_index, estimate_normals,
                   fdn_query, knn_query, load_ply, neighbor_query,
                   normalize_cloud, save_ply)
from .labels import UNLABELED, LabelMap, Provenance, load_labels, save_labels
from .nnet import (LossWeights, ModelParams, estimate_sigma, forward,
                   init_or_resize_head, load_checkpoint, save_checkpoint,
                   segment_loss, smoothness_loss, smoothness_loss_exact,
                   total_loss, transform_reg)
from .region_grow import GrowConfig, grow_regions
from .session import (Correction, Phase, SessionState, create_session,
                      dump_events, finalize, replay_events, submit_corrections,
                      submit_seeds, train_and_predict)
from .trainer import (TrainConfig, checkpoint_roundtrip, final_retrain,
                      finetune_round, pretrain)
from .oracle import (EvalReport, OraclePolicy, evaluate, manual_baseline_clicks,
                     run_simulated_session, select_corrections, select_seeds)
from .datasets import ShapeSpec, generate_dataset, generate_shape

__version__ = "0.1.0"
