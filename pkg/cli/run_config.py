from dataclasses import dataclass
from typing import Optional

import click

from utils.idx_ingest import Precision


@dataclass(frozen=True)
class RunConfig:
    """Settings for one command, after flags have been laid over the settings file"""

    images_path: str
    store_path: str
    output_path: Optional[str]
    start: int = 0
    count: Optional[int] = None
    chunk_size: int = 1000
    theta: float = 100.0
    threshold_h: float = 90.0
    precision: Precision = Precision.F64
    workers: int = 4
    binarize_cutoff: int = 0

    def __post_init__(self):
        if self.start < 0:
            raise click.UsageError(f"--start must be nonnegative, got {self.start}")
        if self.count is not None and self.count < 1:
            raise click.UsageError(f"--count must be at least 1, got {self.count}")
        if self.chunk_size < 1:
            raise click.UsageError(f"--chunk-size must be at least 1, got {self.chunk_size}")
        if not self.theta > 0:
            raise click.UsageError(f"--theta must be positive, got {self.theta}")
        if not 0 < self.threshold_h <= self.theta:
            raise click.UsageError(f"--threshold must lie in (0, theta={self.theta}], got {self.threshold_h}")
        if self.workers < 1:
            raise click.UsageError(f"workers must be at least 1, got {self.workers}")

    @classmethod
    def resolve(cls, settings, images=None, store=None, out=None, start=None, count=None,
                chunk_size=None, theta=None, threshold=None, precision=None):
        def pick(flag, key):
            return settings.get(key) if flag is None else flag

        return cls(
            images_path=pick(images, "images_path"),
            store_path=pick(store, "store_path"),
            output_path=pick(out, "output_path"),
            start=0 if start is None else start,
            count=count,
            chunk_size=int(pick(chunk_size, "chunk_size")),
            theta=float(pick(theta, "theta")),
            threshold_h=float(pick(threshold, "threshold_h")),
            precision=Precision(pick(precision, "precision")),
            workers=int(settings.get("workers", 4)),
            binarize_cutoff=int(settings.get("binarize_cutoff", 0)),
        )
