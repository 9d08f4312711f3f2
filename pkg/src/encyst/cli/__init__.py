from .experiments import (ExperimentConfig, ExperimentRunner, MetricsTable,
                          detection_rate, pair_flip_mask)
from .main import build_parser, main
