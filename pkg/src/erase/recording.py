"""Multichannel recording container shared by every stage of the pipeline."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np


class ChannelKind(str, Enum):
    SCALP = "scalp"
    VIRTUAL = "virtual"
    FORCE = "force"


@dataclass(frozen=True, eq=False)
class Recording:
    """Channels x samples data matrix with labels, kinds and sample rate (Hz).

    Amplitudes are in microvolts for scalp and virtual channels and in sensor
    units for force channels.
    """

    labels: tuple[str, ...]
    kinds: tuple[ChannelKind, ...]
    sample_rate: float
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "kinds", tuple(ChannelKind(k) for k in self.kinds))
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValueError(f"recording data must be 2-D, got shape {data.shape}")
        object.__setattr__(self, "data", data)
        if len(self.labels) != data.shape[0] or len(self.kinds) != data.shape[0]:
            raise ValueError(
                f"{data.shape[0]} data rows but {len(self.labels)} labels / {len(self.kinds)} kinds"
            )
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("channel labels must be unique")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        bad = ~np.isfinite(data)
        if bad.any():
            ch, idx = np.argwhere(bad)[0]
            raise ValueError(f"non-finite sample in channel {self.labels[ch]!r} at index {idx}")

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def indices(self, kind: ChannelKind | str) -> np.ndarray:
        kind = ChannelKind(kind)
        return np.array([i for i, k in enumerate(self.kinds) if k is kind], dtype=int)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"no channel labelled {label!r}") from None

    def mask(self, kind: ChannelKind | str) -> np.ndarray:
        kind = ChannelKind(kind)
        return np.array([k is kind for k in self.kinds], dtype=bool)

    def select(self, idx: Sequence[int] | np.ndarray) -> "Recording":
        idx = np.asarray(idx, dtype=int)
        return Recording(
            labels=tuple(self.labels[i] for i in idx),
            kinds=tuple(self.kinds[i] for i in idx),
            sample_rate=self.sample_rate,
            data=self.data[idx],
        )

    def pick(self, *kinds: ChannelKind | str) -> "Recording":
        wanted = {ChannelKind(k) for k in kinds}
        return self.select([i for i, k in enumerate(self.kinds) if k in wanted])

    def equals(self, other: "Recording") -> bool:
        return (
            self.labels == other.labels
            and self.kinds == other.kinds
            and self.sample_rate == other.sample_rate
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )
