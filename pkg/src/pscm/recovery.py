"""Structure recovery from a mixing matrix known up to column permutation and scale.

For each variable, taken in order of increasing support size, total effects
from its possible parents are read off unique components layer by layer;
whatever parents are left without unique components are handled by one
overdetermined least-squares solve.  What remains of the row is its
exogenous part.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._linalg import RANK_RTOL, numerical_rank
from .errors import ConfigError, InternalConsistencyError, MarriageViolationError, ModelMismatchError
from .identifiability import infer_causal_order, possible_parent_matrix
from .model import DEFAULT_EPS, MixingMatrix

log = logging.getLogger(__name__)

__all__ = ["RecoveryConfig", "RecoveryResult", "recover", "prune_adjacency", "infer_causal_order"]


@dataclass
class RecoveryConfig:
    """``ls_residual_tol`` bounds the relative residual of the least-squares
    step; use ``inf`` for noisy (estimated) mixing matrices."""

    eps: float = DEFAULT_EPS
    ls_residual_tol: float = 1e-6
    prune_threshold: float = 0.1
    randomize_ties: bool = False
    seed: Optional[int] = None

    def __post_init__(self):
        for name in ("eps", "ls_residual_tol", "prune_threshold"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be nonnegative")


@dataclass
class RecoveryResult:
    total_effects: np.ndarray
    A_hat: np.ndarray
    A_pruned: np.ndarray
    B_hat: np.ndarray
    order_used: tuple
    diagnostics: list = field(default_factory=list)

    def edges(self, pruned=True):
        A = self.A_pruned if pruned else self.A_hat
        rows, cols = np.nonzero(A)
        return sorted((int(j), int(i)) for i, j in zip(rows, cols))

    def reconstruct(self) -> np.ndarray:
        p = self.A_hat.shape[0]
        return np.linalg.solve(np.eye(p) - self.A_hat, self.B_hat)

    def to_dict(self) -> dict:
        return {
            "order_used": list(self.order_used),
            "A_hat": self.A_pruned.tolist(),
            "A_unpruned": self.A_hat.tolist(),
            "B_hat": self.B_hat.tolist(),
            "total_effects": self.total_effects.tolist(),
            "diagnostics": self.diagnostics,
        }


def prune_adjacency(A_hat, threshold: float) -> np.ndarray:
    """Zero out entries with magnitude below ``threshold``."""
    if threshold < 0:
        raise ConfigError("threshold must be nonnegative")
    A = np.array(A_hat, dtype=float, copy=True)
    A[np.abs(A) < threshold] = 0.0
    return A


def _unique_sets(Bsup, members):
    counts = Counter(j for i in members for j in np.flatnonzero(Bsup[i]))
    return {i: [int(j) for j in np.flatnonzero(Bsup[i]) if counts[j] == 1] for i in members}


def recover(W_tilde, cfg: Optional[RecoveryConfig] = None) -> RecoveryResult:
    """Recover total effects, adjacency and exogenous matrix from ``W_tilde``.

    Rows of the result are in the caller's order; ``order_used`` is the
    processing order.  Raises :class:`MarriageViolationError` if the
    least-squares design is rank deficient and :class:`ModelMismatchError`
    if its relative residual exceeds ``cfg.ls_residual_tol``.
    """
    cfg = cfg or RecoveryConfig()
    if not isinstance(W_tilde, MixingMatrix):
        W_tilde = MixingMatrix(W_tilde, eps=cfg.eps)
    W = W_tilde.W
    eps = cfg.eps
    p, m = W.shape
    sup = np.abs(W) > eps
    if not sup.any(axis=1).all():
        raise ConfigError("mixing matrix has an all-zero row")
    order = infer_causal_order(MixingMatrix(W, eps=eps), cfg.randomize_ties, cfg.seed)
    pp = possible_parent_matrix(sup)

    At = np.eye(p)
    B_hat = np.zeros((p, m))
    Bsup = np.zeros((p, m), dtype=bool)
    diags = []

    for k in order:
        row = W[k].copy()
        remaining = [int(i) for i in np.flatnonzero(pp[k])]
        layer_no = 0
        while remaining:
            U = _unique_sets(Bsup, remaining)
            layer = [i for i in remaining if U[i]]
            if not layer:
                break
            layer_no += 1
            effects = {}
            for i in layer:
                ratios = row[U[i]] / B_hat[i, U[i]]
                a = float(np.mean(ratios))
                spread = float(np.ptp(ratios)) if len(ratios) > 1 else 0.0
                if spread > cfg.ls_residual_tol * max(1.0, abs(a)):
                    log.warning("x%d: unique components of x%d disagree by %.3g", k, i, spread)
                effects[i] = a
                diags.append({"k": int(k), "parent": i, "method": f"unique-layer-{layer_no}",
                              "residual": spread})
            for i, a in effects.items():
                At[k, i] = a
                row -= a * B_hat[i]
                row[U[i]] = 0.0
            remaining = [i for i in remaining if not U[i]]

        if remaining:
            BI = B_hat[remaining]
            cols = np.flatnonzero(Bsup[remaining].any(axis=0))
            M = BI[:, cols].T
            y = row[cols]
            if len(cols) < len(remaining) or numerical_rank(M, RANK_RTOL) < len(remaining):
                raise MarriageViolationError(
                    f"x{k}: {len(remaining)} parents without unique components span too few sources",
                    k=int(k),
                )
            coef, *_ = np.linalg.lstsq(M, y, rcond=None)
            scale = np.linalg.norm(y)
            resid = float(np.linalg.norm(M @ coef - y) / scale) if scale > 0 else 0.0
            if resid > cfg.ls_residual_tol:
                raise ModelMismatchError(
                    f"x{k}: least-squares relative residual {resid:.3g} exceeds {cfg.ls_residual_tol:g}",
                    k=int(k), residual=resid,
                )
            for i, a in zip(remaining, coef):
                At[k, i] = float(a)
                diags.append({"k": int(k), "parent": i, "method": "least-squares", "residual": resid})
            row -= coef @ BI
            row[cols] = 0.0

        row[np.abs(row) <= eps] = 0.0
        B_hat[k] = row
        Bsup[k] = row != 0.0

    try:
        A_hat = np.eye(p) - np.linalg.inv(At)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - At is unit triangular
        raise InternalConsistencyError(f"total-effect matrix is singular: {exc}") from exc
    np.fill_diagonal(A_hat, 0.0)
    return RecoveryResult(
        total_effects=At,
        A_hat=A_hat,
        A_pruned=prune_adjacency(A_hat, cfg.prune_threshold),
        B_hat=B_hat,
        order_used=order,
        diagnostics=diags,
    )
