"""Few-shot semantic segmentation with self-regularized prototypes.

The pipeline pools support features into class prototypes, segments
images by a softmax over pixel-to-prototype similarities (fidelity,
cosine or squared Euclidean), regularises training with the support
images' own restoration loss, and can refine prototypes at inference
time by gradient descent on that loss.
"""
from .data import Episode, EpisodicDataset, SyntheticConfig, generate_synthetic_dataset, sample_episode
from .embedder import EmbedderParams, TrainConfig, backward, embed, init_params, sgd_step, train
from .estimator import PrototypeSegmenter
from .inference import InferenceConfig, MetricKind, predict_mask, score_map, similarity
from .iqi import IqiConfig, IqiTrace, fused_prediction, refine_prototypes, support_iou
from .loss import LossReport, LossWeights, cross_entropy, grad_support_loss, support_loss, total_loss
from .metrics import Confusion, binary_iou, confusion, dice, mean_iou
from .prototype import PrototypeSet, background_prototype, build_prototype_set, foreground_prototype

__version__ = "0.1.0"
