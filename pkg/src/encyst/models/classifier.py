"""Protected classifier: a small convolutional net and its training loop."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace

import numpy as np

from .. import autodiff as ad
from ..data import Dataset
from .handle import ModelHandle


class TrainingDiverged(RuntimeError):
    def __init__(self, step):
        super().__init__(f"loss became non-finite at step {step}")
        self.step = step


@dataclass
class TrainConfig:
    epochs: int = 5
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 2e-4
    batch_size: int = 128
    seed: int = 0
    arch: str = "cnn"  # "cnn" | "linear"


class Classifier:
    """Conv net (or linear model) over NCHW images; graphs built once."""

    def __init__(self, input_shape, num_classes, seed=0, arch="cnn"):
        self.input_shape = tuple(input_shape)  # (C, H, W)
        self.num_classes = num_classes
        self.arch = arch
        self.seed = seed
        rng = np.random.default_rng(seed)
        c, h, w = self.input_shape
        self.params: dict[str, ad.Tensor] = {}

        def par(name, shape, scale):
            t = ad.parameter(rng.normal(scale=scale, size=shape).astype(np.float32),
                             name=name)
            self.params[name] = t
            return t

        flat = c * h * w
        if arch == "linear":
            par("w", (flat, num_classes), np.sqrt(1.0 / flat))
            self.params["b"] = ad.parameter(np.zeros(num_classes, np.float32), name="b")
        elif arch == "cnn":
            if h % 4 or w % 4:
                raise ValueError("cnn arch needs H and W divisible by 4")
            par("conv1_w", (8, c, 3, 3), np.sqrt(2.0 / (c * 9)))
            self.params["conv1_b"] = ad.parameter(np.zeros(8, np.float32), name="conv1_b")
            par("conv2_w", (16, 8, 3, 3), np.sqrt(2.0 / (8 * 9)))
            self.params["conv2_b"] = ad.parameter(np.zeros(16, np.float32), name="conv2_b")
            fdim = 16 * (h // 4) * (w // 4)
            par("fc1_w", (fdim, 64), np.sqrt(2.0 / fdim))
            self.params["fc1_b"] = ad.parameter(np.zeros(64, np.float32), name="fc1_b")
            par("fc2_w", (64, num_classes), np.sqrt(1.0 / 64))
            self.params["fc2_b"] = ad.parameter(np.zeros(num_classes, np.float32),
                                                name="fc2_b")
        else:
            raise ValueError(f"unknown arch {arch!r}")

        self._lock = threading.Lock()
        self._build_graphs()

    def _logits(self, x):
        p = self.params
        if self.arch == "linear":
            n = -1
            flat = ad.reshape(x, (n, int(np.prod(self.input_shape))))
            return ad.matmul(flat, p["w"]) + p["b"]
        h1 = ad.max_pool2d(ad.relu(ad.conv2d(x, p["conv1_w"], p["conv1_b"],
                                             padding=1)), 2)
        h2 = ad.max_pool2d(ad.relu(ad.conv2d(h1, p["conv2_w"], p["conv2_b"],
                                             padding=1)), 2)
        flat = ad.reshape(h2, (-1, p["fc1_w"].data.shape[0]))
        h3 = ad.relu(ad.matmul(flat, p["fc1_w"]) + p["fc1_b"])
        return ad.matmul(h3, p["fc2_w"]) + p["fc2_b"]

    def _build_graphs(self):
        x = ad.placeholder("x")
        self._infer = ad.Graph(ad.softmax(self._logits(x)), inputs=[x])
        xt, yt = ad.placeholder("x"), ad.placeholder("y")
        loss = -ad.tmean(ad.tsum(ad.mul(yt, ad.log_softmax(self._logits(xt))),
                                 axis=1))
        self._train = ad.Graph(loss, inputs=[xt, yt])

    def predict_proba(self, images: np.ndarray) -> np.ndarray:
        return self._infer.forward(images)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state):
        for k, v in self.params.items():
            v.data = np.asarray(state[k], dtype=np.float32).reshape(v.data.shape)

    def clone(self) -> "Classifier":
        c = Classifier(self.input_shape, self.num_classes, seed=self.seed,
                       arch=self.arch)
        c.load_state_dict(self.state_dict())
        return c

    def fit(self, dataset: Dataset, config: TrainConfig,
            mask: dict[str, np.ndarray] | None = None) -> None:
        """SGD-with-momentum training; ``mask`` freezes zeroed entries."""
        with self._lock:
            rng = np.random.default_rng(config.seed)
            opt = ad.SGD(self.params.values(), lr=config.lr,
                         momentum=config.momentum,
                         weight_decay=config.weight_decay)
            onehot = np.eye(self.num_classes, dtype=np.float32)
            n = len(dataset)
            step = 0
            for _ in range(config.epochs):
                order = rng.permutation(n)
                for start in range(0, n, config.batch_size):
                    idx = order[start:start + config.batch_size]
                    loss = self._train.forward(dataset.images[idx],
                                               onehot[dataset.labels[idx]])
                    if not np.isfinite(loss):
                        raise TrainingDiverged(step)
                    opt.zero_grad()
                    self._train.backward()
                    opt.step()
                    if mask is not None:
                        for name, m in mask.items():
                            self.params[name].data *= m
                    step += 1

    def accuracy(self, dataset: Dataset, batch_size=512) -> float:
        hits = 0
        for start in range(0, len(dataset), batch_size):
            probs = self.predict_proba(dataset.images[start:start + batch_size])
            hits += int((probs.argmax(axis=1)
                         == dataset.labels[start:start + batch_size]).sum())
        return hits / len(dataset)

    def handle(self, name, access="black-box", test_accuracy=None) -> ModelHandle:
        meta = {"arch": self.arch, "seed": self.seed}
        if test_accuracy is not None:
            meta["test_accuracy"] = test_accuracy
        return ModelHandle(name=name, num_classes=self.num_classes,
                           proba_fn=self.predict_proba, access=access,
                           metadata=meta,
                           model=self if access == "white-box" else None)


def train_classifier(model_set: Dataset, config: TrainConfig,
                     test_set: Dataset | None = None,
                     access="white-box") -> ModelHandle:
    clf = Classifier(model_set.images.shape[1:], model_set.num_classes,
                     seed=config.seed, arch=config.arch)
    clf.fit(model_set, config)
    acc = clf.accuracy(test_set if test_set is not None else model_set)
    return clf.handle("classifier", access=access, test_accuracy=acc)
