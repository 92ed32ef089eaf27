"""Early-warning detection of anomalous activity in transaction streams.

Pipeline: ingest -> features -> (peak/valley resampling) -> windowing ->
per-window graphs -> optional Poincare-ball map -> GCN -> LSTM -> MLP.
"""
from .errors import LeadWarnError, ValidationError
from .features import FEATURE_COLUMNS, MODEL_FEATURES, FeatureTable, engineer_features
from .graph_builder import GraphSnapshot, build_snapshot
from .ingest import TransactionLog, TransactionRecord, parse_transactions, write_transactions
from .metrics import pr_auc, roc_auc, threshold_metrics
from .model import LeadModel, ModelConfig, VariantSpec, make_variant
from .pv_sampling import PVConfig, detect_peaks_valleys, resample_pv, search_pv_config
from .synth import SynthConfig, degree_tail_check, generate_stream
from .train_eval import chronological_split, evaluate, prepare_data, run_ablation, train
from .windowing import WindowSpec, align_labels, frame_windows, search_window_horizon

__version__ = "0.1.0"
