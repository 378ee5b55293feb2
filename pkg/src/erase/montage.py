"""Electrode layouts, hemicraniectomy-area bookkeeping and homologous mirroring.

Montage files are CSV with a ``# ha_side=left|right`` comment line followed by
``label,x,y,region`` rows, where ``region`` is ``HA`` or ``NHA`` and positions
are 2-D unit-disk coordinates (x to the right ear, y to the nose).
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

HAND_MOTOR = {
    "left": ("C3", "C5", "C1", "FCC5h", "FCC3h", "CCP5h", "CCP3h"),
    "right": ("C4", "C2", "C6", "FCC6h", "FCC4h", "CCP4h", "CCP6h"),
}

_LABEL_RE = re.compile(r"^([A-Za-z]+?)(z|\d+)(h?)$")


class MontageError(ValueError):
    pass


def mirror_label(label: str) -> str:
    """Homologous electrode on the other hemisphere (C3 <-> C4, FCC5h <-> FCC6h).

    Midline labels map to themselves.
    """
    m = _LABEL_RE.match(label)
    if m is None:
        raise MontageError(f"cannot mirror non 10-5 label {label!r}")
    stem, col, half = m.groups()
    if col == "z":
        return label
    n = int(col)
    return f"{stem}{n + 1 if n % 2 else n - 1}{half}"


@dataclass(frozen=True)
class Montage:
    labels: tuple[str, ...]
    positions: np.ndarray  # (n, 2)
    ha: frozenset[str]
    ha_side: str = "left"

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "ha", frozenset(self.ha))
        if len(set(self.labels)) != len(self.labels):
            seen, dup = set(), None
            for l in self.labels:
                if l in seen:
                    dup = l
                    break
                seen.add(l)
            raise MontageError(f"duplicate electrode label {dup!r}")
        if len(self.positions) != len(self.labels):
            raise MontageError("one position per label required")
        if self.ha_side not in HAND_MOTOR:
            raise MontageError(f"ha_side must be 'left' or 'right', got {self.ha_side!r}")
        unknown = sorted(self.ha - set(self.labels))
        if unknown:
            raise MontageError(f"HA mask names unknown electrodes {unknown}")

    def __len__(self):
        return len(self.labels)

    @property
    def hand_motor(self) -> tuple[str, ...]:
        return HAND_MOTOR[self.ha_side]

    @property
    def contralesional(self) -> tuple[str, ...]:
        return tuple(mirror_label(l) for l in self.hand_motor)

    def validate_sets(self) -> None:
        """Raise if the hand-motor or contralesional set is not covered."""
        for name, group in (("hand-motor", self.hand_motor), ("contralesional", self.contralesional)):
            missing = [l for l in group if l not in self.labels]
            if missing:
                raise MontageError(f"{self.ha_side}-HA {name} set needs {missing}, absent from montage")

    def position(self, label: str) -> np.ndarray:
        return self.positions[self.labels.index(label)]

    def region(self, label: str) -> str:
        if label not in self.labels:
            raise MontageError(f"electrode {label!r} missing from montage")
        return "HA" if label in self.ha else "NHA"

    def subset(self, labels: Iterable[str]) -> "Montage":
        labels = tuple(labels)
        missing = [l for l in labels if l not in self.labels]
        if missing:
            raise MontageError(f"electrodes missing from montage: {missing}")
        idx = [self.labels.index(l) for l in labels]
        return Montage(labels, self.positions[idx], self.ha & set(labels), self.ha_side)


def read_montage(path=None, *, require_sets: bool = True) -> Montage:
    """Load a montage CSV; with no path, the bundled 128-electrode layout."""
    if path is None:
        text = resources.files("erase").joinpath("data/montage_128.csv").read_text()
        source = "bundled montage"
    else:
        text = Path(path).read_text()
        source = str(path)
    ha_side = "left"
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key.strip() == "ha_side":
                ha_side = val.strip()
            continue
        if line.strip():
            body.append(line)
    reader = csv.DictReader(io.StringIO("\n".join(body)))
    if reader.fieldnames is None or not {"label", "x", "y", "region"} <= set(reader.fieldnames):
        raise MontageError(f"{source}: header must contain label,x,y,region")
    labels, pos, ha = [], [], set()
    for row in reader:
        labels.append(row["label"].strip())
        pos.append((float(row["x"]), float(row["y"])))
        region = row["region"].strip().upper()
        if region not in ("HA", "NHA"):
            raise MontageError(f"{source}: region must be HA or NHA, got {region!r}")
        if region == "HA":
            ha.add(labels[-1])
    m = Montage(tuple(labels), np.array(pos), frozenset(ha), ha_side)
    if require_sets:
        m.validate_sets()
    return m


def write_montage(path, montage: Montage) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# ha_side={montage.ha_side}\n")
        w = csv.writer(fh)
        w.writerow(["label", "x", "y", "region"])
        for label, (x, y) in zip(montage.labels, montage.positions):
            w.writerow([label, f"{x:.6f}", f"{y:.6f}", montage.region(label)])


# Rows of the bundled 10-5 layout: (y coordinate, labels left to right).
_ROWS = [
    (0.95, ["Fp1", "Fpz", "Fp2"]),
    (0.87, ["AFp1", "AFp2"]),
    (0.80, ["AF7", "AF3", "AFz", "AF4", "AF8"]),
    (0.70, ["AFF5h", "AFF1h", "AFF2h", "AFF6h"]),
    (0.60, ["F9", "F7", "F5", "F3", "F1", "Fz", "F2", "F4", "F6", "F8", "F10"]),
    (0.45, ["FFT9h", "FFT7h", "FFC5h", "FFC3h", "FFC1h", "FFC2h", "FFC4h", "FFC6h", "FFT8h", "FFT10h"]),
    (0.30, ["FT9", "FT7", "FC5", "FC3", "FC1", "FCz", "FC2", "FC4", "FC6", "FT8", "FT10"]),
    (0.15, ["FTT9h", "FTT7h", "FCC5h", "FCC3h", "FCC1h", "FCC2h", "FCC4h", "FCC6h", "FTT8h", "FTT10h"]),
    (0.00, ["T7", "C5", "C3", "C1", "Cz", "C2", "C4", "C6", "T8"]),
    (-0.15, ["TTP7h", "CCP5h", "CCP3h", "CCP1h", "CCP2h", "CCP4h", "CCP6h", "TTP8h"]),
    (-0.30, ["TP9", "TP7", "CP5", "CP3", "CP1", "CPz", "CP2", "CP4", "CP6", "TP8", "TP10"]),
    (-0.45, ["TPP9h", "TPP7h", "CPP5h", "CPP3h", "CPP1h", "CPP2h", "CPP4h", "CPP6h", "TPP8h", "TPP10h"]),
    (-0.60, ["P9", "P7", "P5", "P3", "P1", "Pz", "P2", "P4", "P6", "P8", "P10"]),
    (-0.70, ["PPO9h", "PPO5h", "PPO1h", "PPO2h", "PPO6h", "PPO10h"]),
    (-0.80, ["PO9", "PO7", "PO3", "POz", "PO4", "PO8", "PO10"]),
    (-0.87, ["POO9h", "POO1", "POO2", "POO10h"]),
    (-0.92, ["O1", "Oz", "O2"]),
    (-0.96, ["OI1h", "OI2h"]),
    (-0.99, ["Iz"]),
]


def _lateral(label: str) -> float:
    """Signed column index: odd numbers left (negative), even right, half steps for 'h'."""
    _, col, half = _LABEL_RE.match(label).groups()
    if col == "z":
        return 0.0
    n = int(col)
    c = (n + 1) // 2 if n % 2 else n // 2
    if half:
        c -= 0.5
    return -c if n % 2 else c


def default_montage(ha_side: str = "left") -> Montage:
    """Build the bundled 128-electrode layout; HA covers the fronto-centro-parietal
    convexity of the ``ha_side`` hemisphere."""
    labels, pos = [], []
    for y, row in _ROWS:
        for label in row:
            x = _lateral(label) / 5.0 * 0.95 * np.sqrt(1.0 - y * y)
            labels.append(label)
            pos.append((x, y))
    pos = np.array(pos)
    sign = -1.0 if ha_side == "left" else 1.0
    ha = {l for l, (x, y) in zip(labels, pos) if sign * x > 0.12 and -0.7 <= y <= 0.65}
    return Montage(tuple(labels), pos, frozenset(ha), ha_side)
