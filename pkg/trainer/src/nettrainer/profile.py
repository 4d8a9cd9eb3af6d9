"""Training profiles: the full reference protocol and a desk-scale one."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path


@dataclass
class TrainProfile:
    optimizer: str = "sgd"
    momentum: float = 0.9
    nesterov: bool = True
    lr: float = 0.1
    end_lr: float = 0.0
    schedule: str = "cosine"
    weight_decay: float = 5e-4
    epochs: int = 200
    batch_size: int = 256
    flip_p: float = 0.5
    crop_size: int = 32
    crop_padding: int = 4
    dataset: str = "synthetic"
    subset_fraction: float = 1.0
    num_classes: int = 10
    n_train: int = 50_000
    n_val: int = 10_000
    n_test: int = 10_000
    seed: int = 777

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 < self.subset_fraction <= 1.0:
            raise ValueError("subset_fraction must be in (0, 1]")
        if self.optimizer != "sgd":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")
        if self.schedule not in ("cosine", "constant"):
            raise ValueError(f"unsupported schedule {self.schedule!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainProfile":
        return cls(**data)

    @classmethod
    def load(cls, path: Path) -> "TrainProfile":
        return cls.from_dict(json.loads(Path(path).read_text()))


def desk_profile(seed: int = 777) -> TrainProfile:
    """The minutes-scale profile used by the acceptance checks: the same
    optimizer family and schedule as the full protocol, scaled down."""
    return TrainProfile(epochs=3, batch_size=128, n_train=2_000, n_val=1_000,
                        n_test=1_000, seed=seed)
