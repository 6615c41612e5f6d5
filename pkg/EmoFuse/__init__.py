from .defaults import EMOTIONS, N_EMOTIONS
from .errors import (EmoFuseError, ConfigError, SegmentError, ShapeError, LabelError, ScoreSetError,
                     ManifestError, ChecksumError, VocabularyError, MetricsError, MissingInputError)
from .config import get_config, load_config
from .segment import WaveSegment, LogMelSpectrogram
from .frontend import FrontendConfig, log_mel, normalize_segment, random_chunk
from .augment import AugmentPolicy, augment_batch
from .speech import ResNetConfig, TransferMode, build_model, swap_head, train_ser, score_segment
from .text import Vocabulary, TransformerConfig, tokenize, build_text_model, score_text
from .fusion import ScoreSet, FusionWeights, fuse, znorm, search_weight
from .metrics import ConfusionMatrix, weighted_accuracy, unweighted_accuracy
from .dataset import DatasetManifest, loso_folds
from .pipeline import Pipeline
