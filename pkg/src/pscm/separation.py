"""Mixing-matrix estimation: FastICA with bootstrap pruning, or an oracle shortcut."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats
from sklearn.decomposition import FastICA
from sklearn.exceptions import ConvergenceWarning

from ._linalg import align_columns_signed, normalize_columns
from .errors import ConfigError, SeparationError
from .model import Dataset, MixingMatrix, Pscm, mixing_matrix, scramble

log = logging.getLogger(__name__)

CONTRASTS = ("logcosh", "exp", "cube")
INTERVALS = ("bootstrap", "mean")


@dataclass
class IcaConfig:
    m: Optional[int] = None
    contrast: str = "logcosh"
    max_iter: int = 500
    conv_tol: float = 1e-6
    seed: Optional[int] = None

    def __post_init__(self):
        if self.contrast not in CONTRASTS:
            raise ConfigError(f"unknown contrast {self.contrast!r}")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")


@dataclass
class BootstrapConfig:
    """``interval="bootstrap"`` tests each entry against the spread of the
    replicates (mean +/- t * sd); ``interval="mean"`` uses the standard error
    of the replicate mean (sd / sqrt(n_boot)) instead."""

    n_boot: int = 50
    confidence: float = 0.95
    interval: str = "bootstrap"
    max_retries: int = 10

    def __post_init__(self):
        if self.n_boot < 2:
            raise ConfigError("n_boot must be >= 2")
        if not 0 < self.confidence < 1:
            raise ConfigError("confidence must lie in (0, 1)")
        if self.interval not in INTERVALS:
            raise ConfigError(f"unknown interval {self.interval!r}")


def _logcosh(x, fun_args=None):
    # same contrast as sklearn's "logcosh", without its per-sample Python loop
    gx = np.tanh(x)
    d = 1.0 - gx ** 2
    return gx, (d if x.ndim == 1 else d.mean(axis=-1))


def _exp(x, fun_args=None):
    e = np.exp(-(x ** 2) / 2)
    d = (1 - x ** 2) * e
    return x * e, (d if x.ndim == 1 else d.mean(axis=-1))


def _cube(x, fun_args=None):
    d = 3 * x ** 2
    return x ** 3, (d if x.ndim == 1 else d.mean(axis=-1))


_CONTRAST_FUNCS = {"logcosh": _logcosh, "exp": _exp, "cube": _cube}


def _as_array(X):
    return X.X if isinstance(X, Dataset) else np.asarray(X, dtype=float)


def fastica(X, cfg: Optional[IcaConfig] = None) -> MixingMatrix:
    """Estimate a p x m mixing matrix by deflation FastICA.

    ``meta["converged"]`` is False when some component hit ``max_iter``; the
    estimate is still returned.
    """
    cfg = cfg or IcaConfig()
    X = _as_array(X)
    p, n = X.shape
    m = p if cfg.m is None else int(cfg.m)
    if m > p:
        raise SeparationError(f"m={m} > p={p}: overcomplete separation is not supported")
    if n < p:
        raise SeparationError(f"need at least p={p} samples, got {n}")
    Xc = X - X.mean(axis=1, keepdims=True)
    sv = np.linalg.svd(Xc, compute_uv=False)
    if sv[0] == 0.0 or sv[m - 1] <= 1e-10 * sv[0]:
        raise SeparationError(f"data have rank below m={m}; sources are not separable")
    ica = FastICA(
        n_components=m,
        algorithm="deflation",
        fun=_CONTRAST_FUNCS[cfg.contrast],
        whiten="unit-variance",
        max_iter=cfg.max_iter,
        tol=cfg.conv_tol,
        random_state=cfg.seed,
    )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        ica.fit(Xc.T)
    converged = not any(issubclass(w.category, ConvergenceWarning) for w in caught)
    if not converged:
        log.warning("FastICA did not converge within %d iterations", cfg.max_iter)
    W = ica.mixing_
    if not np.all(np.isfinite(W)):
        raise SeparationError("FastICA produced non-finite estimates")
    # no exact zeros here, so the default support threshold would keep every entry
    return MixingMatrix(W, eps=0.0, meta={"converged": converged, "n_iter": int(ica.n_iter_)})


def bootstrap_prune(X, ica: Optional[IcaConfig] = None, boot: Optional[BootstrapConfig] = None) -> MixingMatrix:
    """Average ICA estimates over bootstrap resamples and zero insignificant entries.

    Every replicate is column-normalized (largest entry +1) and aligned to the
    first one; an entry is kept only if its confidence interval excludes 0.
    Non-converged replicates are dropped; fewer than half surviving is an
    error.  ``meta`` carries the mask, the replicate mean and sd.
    """
    ica = ica or IcaConfig()
    boot = boot or BootstrapConfig()
    X = _as_array(X)
    p, n = X.shape
    seeds = np.random.SeedSequence(ica.seed).spawn(boot.n_boot)
    estimates = []
    for b, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        for _ in range(boot.max_retries + 1):
            Xb = X[:, rng.integers(0, n, size=n)]
            if np.all(Xb.std(axis=1) > 0):
                break
        else:
            raise SeparationError(f"replicate {b}: every resample had a constant row")
        cfg_b = IcaConfig(ica.m, ica.contrast, ica.max_iter, ica.conv_tol, int(rng.integers(2**31 - 1)))
        est = fastica(Xb, cfg_b)
        if not est.meta["converged"]:
            log.info("dropping non-converged replicate %d", b)
            continue
        estimates.append(normalize_columns(est.W))
    need = math.ceil(boot.n_boot / 2)
    if len(estimates) < need:
        raise SeparationError(f"only {len(estimates)} of {boot.n_boot} replicates converged (need {need})")

    ref = estimates[0]
    aligned = []
    for e in estimates:
        perm, signs = align_columns_signed(ref, e)
        aligned.append(e[:, perm] * signs)
    stack = np.stack(aligned)
    k = stack.shape[0]
    mean = stack.mean(axis=0)
    sd = stack.std(axis=0, ddof=1)
    tcrit = stats.t.ppf(0.5 + boot.confidence / 2, df=k - 1)
    half = tcrit * sd
    if boot.interval == "mean":
        half = half / np.sqrt(k)
    keep = np.abs(mean) > half
    keep &= mean != 0.0
    W = np.where(keep, mean, 0.0)
    empty = np.flatnonzero(~keep.any(axis=1))
    if empty.size:
        raise SeparationError(f"every entry of rows {empty.tolist()} was pruned")
    return MixingMatrix(W, eps=0.0, meta={
        "n_boot": boot.n_boot,
        "n_used": k,
        "confidence": boot.confidence,
        "interval": boot.interval,
        "kept_mask": keep,
        "mean": mean,
        "sd": sd,
    })


def oracle_mixing(model: Pscm, seed=None) -> MixingMatrix:
    """The true mixing matrix with columns randomly permuted and rescaled."""
    return scramble(mixing_matrix(model), seed)
