"""Externally guided clustering of frozen vision-language embeddings.

The pipeline: estimate semantic centers on image embeddings, classify a noun
vocabulary onto those centers, keep the most discriminative nouns, retrieve a
text counterpart per image, then cluster either by k-means on the
concatenated modalities (training-free) or by cross-modal mutual
distillation of two cluster heads.
"""

from .core import RngState, cosine_sim, l2_normalize, softmax_temp
from .errors import (DataError, DimensionError, FormatError,
                     NormalizationError, ParameterError, SelectionError,
                     TacError, TrainingDiverged)
from .kmeans import GranularityConfig, KmeansResult, estimate_k, kmeans_fit
from .metrics import MetricsReport, acc, ari, evaluate, nmi
from .neighbors import NeighborGraph, build_graph, sample_neighbor
from .store import (DatasetManifest, NounVocabulary, concat_features,
                    load_embeddings, load_labels, load_manifest,
                    load_vocabulary, write_embeddings, write_labels,
                    write_manifest)
from .textspace import (NounSelection, TextCounterparts, ZeroShotConfig,
                        build_counterparts, classify_nouns, cluster_no_train,
                        select_nouns, zero_shot_classify)
from .distill import (AssignmentBatch, ClusterHeadParams, DistillConfig,
                      LossBreakdown, head_forward, loss_bal, loss_con,
                      loss_dis, loss_total, predict, train)

__version__ = "0.1.0"
