"""Comparison metrics between recovered and true structures."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from ._linalg import align_columns, normalize_columns
from .errors import ConfigError

DEFAULT_THRESHOLD = 0.1

CSV_FIELDS = ("shd", "shd_per_edge", "frobenius", "precision", "recall", "n_true", "n_hat")


@dataclass
class MetricsReport:
    """``shd_per_edge`` is ``None`` when the true graph has no edges."""

    shd: int
    shd_per_edge: Optional[float]
    frobenius: float
    precision: float
    recall: float
    n_true: int
    n_hat: int
    matched_permutation: Optional[list] = None

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_record(self, prefix: str = "") -> dict:
        return {f"{prefix}{k}": getattr(self, k) for k in CSV_FIELDS}


def _check_shapes(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ConfigError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def compare_supports(M_true, M_hat, threshold: float = DEFAULT_THRESHOLD) -> MetricsReport:
    """Entry-wise support comparison; an entry is an edge when ``|x| >= threshold``."""
    M_true, M_hat = _check_shapes(M_true, M_hat)
    t = np.abs(M_true) >= threshold
    h = np.abs(M_hat) >= threshold
    n_true, n_hat = int(t.sum()), int(h.sum())
    both = int((t & h).sum())
    shd = int((t ^ h).sum())
    return MetricsReport(
        shd=shd,
        shd_per_edge=shd / n_true if n_true else None,
        frobenius=float(np.linalg.norm(M_true - M_hat)),
        precision=both / n_hat if n_hat else 1.0,
        recall=both / n_true if n_true else 1.0,
        n_true=n_true,
        n_hat=n_hat,
    )


def compare_adjacency(A_true, A_hat, threshold: float = DEFAULT_THRESHOLD) -> MetricsReport:
    """SHD (directed; a reversed edge costs 2), Frobenius distance, precision, recall."""
    A_true, A_hat = _check_shapes(A_true, A_hat)
    if A_true.ndim != 2 or A_true.shape[0] != A_true.shape[1]:
        raise ConfigError("adjacency matrices must be square")
    return compare_supports(A_true, A_hat, threshold)


def match_B(B_true, B_hat, threshold: float = DEFAULT_THRESHOLD):
    """Normalize both matrices column-wise, then permute ``B_hat``'s columns to
    minimize the Frobenius distance.  Returns ``(B_star, report)``."""
    B_true, B_hat = _check_shapes(B_true, B_hat)
    Bt = normalize_columns(B_true)
    Bh = normalize_columns(B_hat)
    perm = align_columns(Bt, Bh)
    B_star = Bh[:, perm]
    report = compare_supports(Bt, B_star, threshold)
    report.matched_permutation = [int(j) for j in perm]
    return B_star, report


def ica_success(W_true, W_tilde, threshold: float = 1e-9) -> bool:
    """True iff some column permutation makes the two supports identical."""
    W_true, W_tilde = _check_shapes(W_true, W_tilde)
    st = np.abs(W_true) > threshold
    sh = np.abs(W_tilde) > threshold
    # compat[i, j]: true column i and estimated column j have the same support
    compat = np.all(st[:, :, None] == sh[:, None, :], axis=0)
    if not compat.any(axis=1).all():
        return False
    match = maximum_bipartite_matching(csr_matrix(compat.astype(np.int8)), perm_type="column")
    return bool(np.all(match >= 0))


def shd_identity_holds(report: MetricsReport) -> bool:
    """``shd = (1 - recall) * n_true + (1 - precision) * n_hat``, up to rounding."""
    rhs = (1 - report.recall) * report.n_true + (1 - report.precision) * report.n_hat
    return math.isclose(report.shd, rhs, rel_tol=0, abs_tol=1e-9)
