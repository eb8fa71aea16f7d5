"""Image-quality gating for ultra-widefield fundus photographs."""

from .augment import AugmentConfig, augment
from .errors import (CheckpointError, ConfigError, DataError, FundusQCError,
                     InitializationError, ManifestError, TrainingAborted)
from .estimator import ArtifactClassifier
from .evaluation import (BinaryConfusion, ClassMetrics, EvalReport, confusion,
                         evaluate_predictions, macro_average, metrics,
                         render_report, threshold_predictions)
from .labels import DISPLAY_NAMES, LABEL_ORDER, N_CLASSES, ArtifactLabels
from .manifest import DatasetManifest, ImageRecord, load_manifest, save_manifest
from .network import (ClassifierConfig, build_classifier, forward,
                      load_checkpoint, probabilities, save_checkpoint)
from .preprocessing import PreprocessConfig, load_rgb, preprocess
from .splitting import kfold_partition, split_dataset, split_sizes
from .synthetic import SynthConfig, generate_base_fundus, generate_dataset
from .training import (EarlyStopping, TrainConfig, class_pos_weights,
                       lr_at_epoch, sgd_momentum_step, weighted_bce)

__version__ = "0.1.0"
