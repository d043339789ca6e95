"""Open-ended 3D object category learning and recognition.

Objects are sets of spin-image descriptors encoded twice: as a histogram
over shared latent topics (basic-level structure) and as a histogram over a
per-category visual dictionary (fine-grained detail). Categories are sets
of stored instances compared by chi-squared distance, learned open-endedly
through teach and correct actions.
"""

from .cloud import Keypoint, PointCloud, estimate_normals, load_cloud, select_keypoints
from .codebook import (Dictionary, assign_word, build_dictionary, build_pool,
                       update_dictionary_incremental)
from .learner import GenericModel, LearningAgent, bootstrap_generic_model
from .memory import (CategoryModel, ClassificationResult, InstanceStore, chi_squared,
                     classify, correct, ocd, teach)
from .params import Params, load_config, save_config
from .protocol import (ExperimentTrace, Metrics, ProtocolConfig, compute_metrics,
                       run_experiment, run_protocol, running_accuracy)
from .represent import (ObjectRepresentation, encode_for_category, encode_generic,
                        encode_specific, recompute_all)
from .spin import SpinImage, compute_spin_image, describe_object, feature_matrix
from .synthetic import SyntheticShapeSpec, generate_synthetic
from .topics import TopicModel, absorb_object, estimate_phi, refresh_topics, synthesize_topics

__version__ = "0.1.0"
