"""Seed-deterministic random-feature perceptual distance.

Three convolutional stages (16/32/64 channels, 3x3, stride 2, relu) with
fixed random weights; the distance between two images is the weighted sum
over stages of the mean squared difference of channel-normalized
activations. The extractor is pluggable: anything exposing ``distance`` and
``distance_pairs`` with the same metric laws can stand in.
"""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad

_EPS = 1e-6


class PerceptualMetric:
    def __init__(self, image_shape, seed=0, stage_channels=(16, 32, 64),
                 stage_weights=None):
        self.image_shape = tuple(image_shape)  # (C, H, W)
        self.seed = seed
        self.stage_channels = tuple(stage_channels)
        self.stage_weights = (tuple(stage_weights) if stage_weights
                              else (1.0,) * len(self.stage_channels))
        rng = np.random.default_rng(seed)
        self.weights = []
        cin = self.image_shape[0]
        for cout in self.stage_channels:
            fan_in = cin * 9
            w = rng.normal(scale=np.sqrt(2.0 / fan_in),
                           size=(cout, cin, 3, 3)).astype(np.float32)
            self.weights.append(w)
            cin = cout
        self._pair_graph = None

    # -- graph construction (usable inside training losses) ---------------
    def feature_nodes(self, x: ad.Tensor) -> list[ad.Tensor]:
        """Channel-normalized activations of each stage, as graph nodes."""
        feats = []
        h = x
        for w in self.weights:
            h = ad.relu(ad.conv2d(h, ad.Tensor(w), stride=2, padding=1))
            norm = ad.sqrt(ad.tmean(ad.square(h), axis=1, keepdims=True) + _EPS)
            feats.append(ad.div(h, norm))
        return feats

    def distance_node(self, xa: ad.Tensor, xb: ad.Tensor) -> ad.Tensor:
        """Per-pair distance vector (N,) for two NCHW batches."""
        total = None
        for wgt, fa, fb in zip(self.stage_weights,
                               self.feature_nodes(xa), self.feature_nodes(xb)):
            term = ad.tmean(ad.square(ad.sub(fa, fb)), axis=(1, 2, 3)) * wgt
            total = term if total is None else ad.add(total, term)
        return total

    # -- array-level evaluation --------------------------------------------
    def _graph(self):
        if self._pair_graph is None:
            xa, xb = ad.placeholder("xa"), ad.placeholder("xb")
            self._pair_graph = ad.Graph(self.distance_node(xa, xb),
                                        inputs=[xa, xb])
        return self._pair_graph

    def distance_pairs(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float32)
        ys = np.asarray(ys, dtype=np.float32)
        if xs.shape != ys.shape:
            raise ad.ShapeError(f"distance: {xs.shape} vs {ys.shape}")
        return self._graph().forward(xs, ys)

    def distance(self, x: np.ndarray, y: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float32)
        y = np.asarray(y, dtype=np.float32)
        if x.ndim == 3:
            x, y = x[None], y[None]
        return float(self.distance_pairs(x, y)[0])


def perceptual_distance(metric: PerceptualMetric, x, y) -> float:
    return metric.distance(x, y)
