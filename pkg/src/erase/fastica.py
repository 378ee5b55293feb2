"""FastICA with symmetric decorrelation.

The data model is ``X = A S + means`` with X channels x samples. Fitting
whitens by eigendecomposition of the sample covariance and then runs the
parallel fixed-point iteration of Hyvarinen & Oja on the whitened data.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Optional

import numpy as np

# Sample chunk used to bound memory in the fixed-point update.
_CHUNK = 131072
_RANK_RTOL = 1e-10


class RankError(ValueError):
    def __init__(self, message: str, rank: int):
        super().__init__(message)
        self.rank = rank


class IcaConvergenceError(RuntimeError):
    def __init__(self, message: str, last_delta: float, seed: int):
        super().__init__(message)
        self.last_delta = last_delta
        self.seed = seed


@dataclass(frozen=True, eq=False)
class IcaModel:
    channel_means: np.ndarray  # (n_channels,)
    whitening: np.ndarray      # (n_components, n_channels)
    unmixing: np.ndarray       # (n_components, n_components), rows orthonormal
    mixing: np.ndarray         # (n_channels, n_components)
    nonlinearity: str = "tanh"
    seed: int = 0
    n_iter: int = 0

    @property
    def n_components(self) -> int:
        return self.unmixing.shape[0]

    @property
    def n_channels(self) -> int:
        return self.mixing.shape[0]

    @property
    def filters(self) -> np.ndarray:
        """Full unmixing map from centered channels to components."""
        return self.unmixing @ self.whitening


def covariance_eig(data: np.ndarray):
    """Channel means and descending eigen-decomposition of the sample covariance (1/n)."""
    x = np.asarray(data, dtype=float)
    n = x.shape[1]
    means = x.mean(axis=1)
    cov = np.zeros((x.shape[0], x.shape[0]))
    for s in range(0, n, _CHUNK):
        blk = x[:, s:s + _CHUNK] - means[:, None]
        cov += blk @ blk.T
    cov /= n
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    return means, evals[order], evecs[:, order]


def numerical_rank(evals: np.ndarray) -> int:
    top = evals[0] if evals.size else 0.0
    if top <= 0:
        return 0
    return int(np.sum(evals > top * _RANK_RTOL))


def whiten(data: np.ndarray, n_components: Optional[int] = None):
    """PCA whitening.

    Returns ``(whitening, whitened, channel_means)``; the whitened data has
    identity covariance and its rows follow descending eigenvalue. With
    ``n_components=None`` the count is capped at the covariance rank.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise ValueError("data must be channels x samples")
    n_ch, n = x.shape
    if n <= n_ch:
        raise ValueError(f"need more samples ({n}) than channels ({n_ch})")
    means, evals, evecs = covariance_eig(x)
    rank = numerical_rank(evals)
    if n_components is None:
        n_components = rank
    if n_components < 1:
        raise RankError("covariance has rank 0", rank)
    if n_components > rank:
        raise RankError(
            f"n_components={n_components} exceeds covariance rank {rank} of {n_ch} channels", rank
        )
    k = n_components
    whitening = evecs[:, :k].T / np.sqrt(evals[:k])[:, None]
    return whitening, _apply(whitening, x, means), means


def _apply(mat: np.ndarray, x: np.ndarray, means: np.ndarray) -> np.ndarray:
    out = np.empty((mat.shape[0], x.shape[1]))
    for s in range(0, x.shape[1], _CHUNK):
        out[:, s:s + _CHUNK] = mat @ (x[:, s:s + _CHUNK] - means[:, None])
    return out


def symmetric_decorrelation(w: np.ndarray) -> np.ndarray:
    """W <- (W W^T)^(-1/2) W."""
    evals, evecs = np.linalg.eigh(w @ w.T)
    evals = np.clip(evals, np.finfo(float).tiny, None)
    return (evecs / np.sqrt(evals)) @ evecs.T @ w


def _fixed_point_step(w: np.ndarray, z: np.ndarray, nonlinearity: str) -> np.ndarray:
    k, n = z.shape
    acc = np.zeros((k, k))
    dsum = np.zeros(k)
    for s in range(0, n, _CHUNK):
        zb = z[:, s:s + _CHUNK]
        y = w @ zb
        if nonlinearity == "tanh":
            g = np.tanh(y)
            dsum += (1.0 - g * g).sum(axis=1)
        else:
            g = y ** 3
            dsum += (3.0 * y * y).sum(axis=1)
        acc += g @ zb.T
    return acc / n - (dsum / n)[:, None] * w


def fit_fastica(data: np.ndarray, n_components: Optional[int] = None,
                nonlinearity: Literal["tanh", "cube"] = "tanh", max_iter: int = 500,
                tol: float = 1e-5, seed: int = 0) -> IcaModel:
    """Fit FastICA; deterministic for a given seed.

    Converged when max_j |1 - |<w_j new, w_j old>|| < tol, otherwise
    IcaConvergenceError carrying the last delta.
    """
    if nonlinearity not in ("tanh", "cube"):
        raise ValueError(f"unknown nonlinearity {nonlinearity!r}")
    x = np.asarray(data, dtype=float)
    if not np.isfinite(x).all():
        raise ValueError("data contains non-finite values")
    n_ch, n = x.shape
    if n < 10 * n_ch:
        warnings.warn(f"only {n} samples for {n_ch} channels; ICA estimates may be unreliable",
                      stacklevel=2)
    if n_components is None:
        n_components = n_ch
    whitening, z, means = whiten(x, n_components)
    k = whitening.shape[0]
    rng = np.random.default_rng(seed)
    w = symmetric_decorrelation(rng.standard_normal((k, k)))
    delta = np.inf
    for it in range(1, max_iter + 1):
        w_new = symmetric_decorrelation(_fixed_point_step(w, z, nonlinearity))
        delta = float(np.max(np.abs(1.0 - np.abs(np.einsum("ij,ij->i", w_new, w)))))
        w = w_new
        if delta < tol:
            break
    else:
        raise IcaConvergenceError(
            f"FastICA did not converge in {max_iter} iterations (last delta {delta:.3g})", delta, seed
        )
    # Re-orthonormalize once more so row orthonormality holds to machine precision.
    w = symmetric_decorrelation(w)
    filters = w @ whitening
    mixing = np.linalg.pinv(filters)
    return IcaModel(means, whitening, w, mixing, nonlinearity, seed, it)


def transform(model: IcaModel, data: np.ndarray) -> np.ndarray:
    """Components S = W K (X - means)."""
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[0] != model.n_channels:
        raise ValueError(f"expected {model.n_channels} channels, got shape {x.shape}")
    return _apply(model.filters, x, model.channel_means)


def inverse_transform(model: IcaModel, components: np.ndarray,
                      rejected: Iterable[int] = ()) -> np.ndarray:
    """Back-project components with the rejected ones zeroed, then re-add channel means."""
    s = np.asarray(components, dtype=float)
    if s.ndim != 2 or s.shape[0] != model.n_components:
        raise ValueError(f"expected {model.n_components} components, got shape {s.shape}")
    rejected = sorted(set(int(j) for j in rejected))
    for j in rejected:
        if not 0 <= j < model.n_components:
            raise IndexError(f"component index {j} out of range [0, {model.n_components})")
    keep = np.setdiff1d(np.arange(model.n_components), rejected)
    out = np.empty((model.n_channels, s.shape[1]))
    a = model.mixing[:, keep]
    for st in range(0, s.shape[1], _CHUNK):
        out[:, st:st + _CHUNK] = a @ s[keep, st:st + _CHUNK] + model.channel_means[:, None]
    return out


_MODEL_MAGIC = b"EICA"
_NONLIN = {"tanh": 0, "cube": 1}


def save_model(path, model: IcaModel) -> None:
    """Binary bundle: header then means, whitening, unmixing, mixing as
    row-major little-endian float64."""
    head = struct.pack("<4sHIIqBI", _MODEL_MAGIC, 1, model.n_channels, model.n_components,
                       model.seed, _NONLIN[model.nonlinearity], model.n_iter)
    with open(path, "wb") as fh:
        fh.write(head)
        for arr in (model.channel_means, model.whitening, model.unmixing, model.mixing):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path) -> IcaModel:
    buf = Path(path).read_bytes()
    fmt = "<4sHIIqBI"
    size = struct.calcsize(fmt)
    if len(buf) < size:
        raise ValueError("truncated ICA model header")
    magic, version, c, k, seed, nl, n_iter = struct.unpack_from(fmt, buf, 0)
    if magic != _MODEL_MAGIC or version != 1:
        raise ValueError("not an ICA model bundle")
    shapes = [(c,), (k, c), (k, k), (c, k)]
    need = size + 8 * sum(int(np.prod(s)) for s in shapes)
    if len(buf) != need:
        raise ValueError(f"ICA model bundle has {len(buf)} bytes, expected {need}")
    arrays, pos = [], size
    for shp in shapes:
        cnt = int(np.prod(shp))
        arrays.append(np.frombuffer(buf, "<f8", cnt, pos).reshape(shp).copy())
        pos += 8 * cnt
    names = {v: k_ for k_, v in _NONLIN.items()}
    return IcaModel(*arrays, nonlinearity=names[nl], seed=seed, n_iter=n_iter)
