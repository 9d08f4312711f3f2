"""Model persistence: binary checkpoint plus a JSON metadata sidecar."""

from __future__ import annotations

import dataclasses
import json
import os

from ..autodiff import load_checkpoint, save_checkpoint
from .classifier import Classifier
from .vae import VaeConfig, VaeModel


def _sidecar(path: str) -> str:
    return path + ".json"


def save_classifier(clf: Classifier, path: str,
                    extra: dict | None = None) -> None:
    save_checkpoint(path, clf.state_dict())
    meta = {"kind": "classifier", "arch": clf.arch,
            "input_shape": list(clf.input_shape),
            "num_classes": clf.num_classes, "seed": clf.seed}
    meta.update(extra or {})
    with open(_sidecar(path), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def load_classifier(path: str) -> tuple[Classifier, dict]:
    meta = _load_meta(path, "classifier")
    clf = Classifier(tuple(meta["input_shape"]), meta["num_classes"],
                     seed=meta.get("seed", 0), arch=meta.get("arch", "cnn"))
    clf.load_state_dict(load_checkpoint(path))
    return clf, meta


def save_vae(vae: VaeModel, path: str, extra: dict | None = None) -> None:
    save_checkpoint(path, vae.state_dict())
    meta = {"kind": "vae", "image_shape": list(vae.image_shape),
            "config": dataclasses.asdict(vae.config)}
    meta.update(extra or {})
    with open(_sidecar(path), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def load_vae(path: str) -> tuple[VaeModel, dict]:
    meta = _load_meta(path, "vae")
    vae = VaeModel(tuple(meta["image_shape"]), VaeConfig(**meta["config"]))
    vae.load_state_dict(load_checkpoint(path))
    return vae, meta


def _load_meta(path: str, kind: str) -> dict:
    for required in (path, _sidecar(path)):
        if not os.path.exists(required):
            raise FileNotFoundError(
                f"missing {kind} artifact: {required} "
                f"(run the train command first)")
    with open(_sidecar(path)) as fh:
        meta = json.load(fh)
    if meta.get("kind") != kind:
        raise ValueError(f"{path} holds a {meta.get('kind')!r} checkpoint, "
                         f"expected {kind!r}")
    return meta
