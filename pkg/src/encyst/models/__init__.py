from .handle import AccessViolation, CountingHandle, ModelHandle, predict_top1
from .classifier import Classifier, TrainConfig, TrainingDiverged, train_classifier
from .perceptual import PerceptualMetric, perceptual_distance
from .vae import IdentityVae, TcBatchTooSmall, VaeConfig, VaeModel, tc_estimate, train_vae
from .vq import EmptyCodebook, VqCodebook, vq_loss, vq_quantize, vq_straight_through
from .io import load_classifier, load_vae, save_classifier, save_vae
