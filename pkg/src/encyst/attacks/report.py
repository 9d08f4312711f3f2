"""Uniform result record for model-modification attacks."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field


@dataclass
class AttackReport:
    attack: str
    clean_accuracy_before: float
    clean_accuracy_after: float
    success_rate: float | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        for label, rate in (("clean_accuracy_before", self.clean_accuracy_before),
                            ("clean_accuracy_after", self.clean_accuracy_after),
                            ("success_rate", self.success_rate)):
            if rate is not None and not 0.0 <= rate <= 1.0:
                raise ValueError(f"{label} must lie in [0,1], got {rate}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "AttackReport":
        return cls(**json.loads(text))
