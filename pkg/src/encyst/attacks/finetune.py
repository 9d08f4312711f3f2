"""Fine-tuning and retrain-from-scratch model modifications."""

from __future__ import annotations

from dataclasses import replace

from ..data import Dataset
from ..models import ModelHandle, TrainConfig, train_classifier
from .report import AttackReport


def finetune(handle: ModelHandle, dataset: Dataset, epochs: int = 1,
             lr: float = 0.005, test_set: Dataset | None = None,
             config: TrainConfig | None = None
             ) -> tuple[ModelHandle, AttackReport]:
    """Continue training a copy of the model; the original is untouched."""
    base = handle.require_model()
    tuned = base.clone()
    cfg = config or TrainConfig()
    cfg = replace(cfg, epochs=epochs, lr=lr)
    eval_set = test_set if test_set is not None else dataset
    before = base.accuracy(eval_set)
    if epochs > 0:
        tuned.fit(dataset, cfg)
    after = tuned.accuracy(eval_set)
    new_handle = tuned.handle("finetuned", access="white-box",
                              test_accuracy=after)
    report = AttackReport(attack="finetune", clean_accuracy_before=before,
                          clean_accuracy_after=after,
                          params={"epochs": epochs, "lr": lr,
                                  "samples": len(dataset)})
    return new_handle, report


def retrain_from_scratch(model_set: Dataset, config: TrainConfig,
                         test_set: Dataset | None = None
                         ) -> tuple[ModelHandle, AttackReport]:
    """Same architecture and data, fresh initialization seed."""
    handle = train_classifier(model_set, config, test_set=test_set)
    acc = handle.metadata["test_accuracy"]
    report = AttackReport(attack="retrain", clean_accuracy_before=acc,
                          clean_accuracy_after=acc,
                          params={"seed": config.seed, "epochs": config.epochs})
    return handle, report
