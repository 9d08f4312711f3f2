from .report import AttackReport
from .badnet import (TriggerSpec, attack_success_rate, badnet_attack,
                     badnet_poison, poison_indices, stamp)
from .prune import prune_mask, prune_weights
from .finetune import finetune, retrain_from_scratch
from .detector import (DegenerateCalibration, ReconErrorDetector,
                       recon_error_detector, uniform_noise_probes)
