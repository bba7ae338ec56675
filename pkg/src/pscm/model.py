"""Linear propagation SCMs: representation, generation and simulation.

A model over ``p`` observed variables and ``m`` independent sources is

    X = A X + B S,        so        X = W S  with  W = (I - A)^{-1} B.

``A[i, j]`` is the direct effect of ``x_j`` on ``x_i``; ``B[i, j]`` is the
exogenous effect of ``s_j`` on ``x_i``.  Indices are 0-based throughout.
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from ._linalg import RANK_RTOL, numerical_rank
from .errors import ConfigError, MalformedModelError

DEFAULT_EPS = 1e-9


@dataclass(eq=False)
class Pscm:
    """Adjacency ``A`` (p x p), exogenous matrix ``B`` (p x m) and a causal order.

    ``order`` lists variable indices from first to last cause; ``A`` restricted
    to that ordering must be strictly lower triangular.
    """

    A: np.ndarray
    B: np.ndarray
    order: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A = np.array(self.A, dtype=float)
        self.B = np.array(self.B, dtype=float)
        if self.B.ndim != 2:
            raise MalformedModelError("B must be a 2-D matrix")
        p = self.B.shape[0]
        if self.A.shape != (p, p):
            raise MalformedModelError(f"A has shape {self.A.shape}, expected {(p, p)}")
        if self.order is None:
            self.order = topological_order(self.A)
        self.order = tuple(int(i) for i in self.order)
        if sorted(self.order) != list(range(p)):
            raise MalformedModelError(f"order {self.order} is not a permutation of range({p})")
        Ao = self.A[np.ix_(self.order, self.order)]
        if np.any(np.triu(Ao) != 0):
            raise MalformedModelError("A is not strictly lower triangular under the given order")
        if not np.all(np.isfinite(self.A)) or not np.all(np.isfinite(self.B)):
            raise MalformedModelError("non-finite coefficients")
        zero_cols = np.flatnonzero(~np.any(self.B != 0, axis=0))
        if zero_cols.size:
            raise MalformedModelError(f"B has all-zero source columns {zero_cols.tolist()}")
        self.A.setflags(write=False)
        self.B.setflags(write=False)

    @property
    def p(self) -> int:
        return self.B.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def parents(self, k):
        return [int(j) for j in np.flatnonzero(self.A[k] != 0)]

    def edges(self):
        """Causal edges as ``(cause, effect)`` pairs."""
        rows, cols = np.nonzero(self.A)
        return [(int(j), int(i)) for i, j in zip(rows, cols)]

    def ancestors(self):
        """Boolean matrix ``anc[i, j]``: ``x_j`` is a (strict) ancestor of ``x_i``."""
        reach = self.A != 0
        anc = reach.copy()
        # order-respecting closure: process effects after their causes
        for k in self.order:
            for j in np.flatnonzero(reach[k]):
                anc[k] |= anc[j]
        return anc


@dataclass(eq=False)
class MixingMatrix:
    """A (possibly permuted and rescaled) mixing matrix with its zero threshold."""

    W: np.ndarray
    eps: float = DEFAULT_EPS
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.W = np.array(self.W, dtype=float)
        if self.W.ndim != 2:
            raise MalformedModelError("mixing matrix must be 2-D")
        if self.eps < 0:
            raise ConfigError("eps must be nonnegative")
        empty = np.flatnonzero(~self.support.any(axis=1))
        if empty.size:
            raise MalformedModelError(f"rows {empty.tolist()} have no source component")
        self.W.setflags(write=False)

    @property
    def p(self) -> int:
        return self.W.shape[0]

    @property
    def m(self) -> int:
        return self.W.shape[1]

    @property
    def support(self) -> np.ndarray:
        return np.abs(self.W) > self.eps

    def comp(self, i) -> frozenset:
        return frozenset(int(j) for j in np.flatnonzero(self.support[i]))


@dataclass
class GenerationConfig:
    """Parameters of the random model generator.

    Give either ``m`` or the source ratio ``r`` (``m = round(r * p)``).
    """

    p: int
    m: Optional[int] = None
    r: Optional[float] = None
    d_e: float = 1.5
    d_o: float = 1.5
    coeff_interval: tuple = (0.5, 1.0)
    distinct_source: bool = False
    seed: Optional[int] = None
    max_row_resamples: int = 100
    max_rejections: int = 100_000

    def n_sources(self) -> int:
        if self.m is not None:
            return int(self.m)
        if self.r is None:
            return int(self.p)
        return int(round(self.r * self.p))

    @property
    def edge_prob(self) -> float:
        return float(np.clip(self.d_e / (self.p - 1), 0.0, 1.0)) if self.p > 1 else 0.0

    @property
    def source_prob(self) -> float:
        return float(np.clip(self.d_o / self.p, 0.0, 1.0))


@dataclass
class Dataset:
    """Observations ``X`` with one row per observed variable, one column per sample."""

    X: np.ndarray
    source_dist: str = "uniform"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2 or self.X.shape[1] < 1:
            raise MalformedModelError("dataset must be p x n with n >= 1")
        if not np.all(np.isfinite(self.X)):
            raise MalformedModelError("dataset contains non-finite entries")

    @property
    def p(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]


@dataclass
class AssumptionReport:
    """Outcome of :func:`check_assumptions`; witnesses are ``None`` on success."""

    assumption2_ok: bool
    assumption2_witness: Optional[tuple]
    faithfulness_a_ok: bool
    faithfulness_a_witness: Optional[tuple]
    faithfulness_b_ok: bool
    faithfulness_b_witness: Optional[tuple]
    faithfulness_b_checked: int = 0

    @property
    def ok(self) -> bool:
        return self.assumption2_ok and self.faithfulness_a_ok and self.faithfulness_b_ok


def topological_order(A) -> tuple:
    """A causal order for adjacency ``A`` (Kahn's algorithm, smallest index first)."""
    A = np.asarray(A) != 0
    p = A.shape[0]
    indeg = A.sum(axis=1).astype(int)
    ready = sorted(i for i in range(p) if indeg[i] == 0)
    out = []
    while ready:
        j = ready.pop(0)
        out.append(j)
        for i in np.flatnonzero(A[:, j]):
            indeg[i] -= 1
            if indeg[i] == 0:
                ready.append(int(i))
                ready.sort()
    if len(out) != p:
        raise MalformedModelError("A contains a directed cycle")
    return tuple(out)


def mixing_matrix(model: Pscm, eps: float = DEFAULT_EPS) -> MixingMatrix:
    """``W = (I - A)^{-1} B`` via an LU solve."""
    p = model.p
    M = np.eye(p) - model.A
    try:
        lu = lu_factor(M, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:  # pragma: no cover - guarded by Pscm
        raise MalformedModelError(f"I - A is singular: {exc}") from exc
    if np.any(np.diag(lu[0]) == 0):
        raise MalformedModelError("I - A is singular (order violated)")
    W = lu_solve(lu, model.B)
    return MixingMatrix(W, eps=eps)


def _coefficients(rng, size, interval):
    lo, hi = interval
    mag = rng.uniform(lo, hi, size=size)
    sign = rng.choice([-1.0, 1.0], size=size)
    return mag * sign


def _masks(sup) -> list:
    """Each boolean row as a Python int bitmask."""
    sup = np.asarray(sup, dtype=bool)
    if sup.shape[1] <= 62:
        weights = np.left_shift(np.int64(1), np.arange(sup.shape[1], dtype=np.int64))
        return [int(x) for x in sup.astype(np.int64) @ weights]
    return [sum(1 << int(j) for j in np.flatnonzero(row)) for row in sup]


@dataclass
class Structure:
    """Zero pattern of a model in its natural (causal) order.

    ``bmask[k]`` and ``wmask[k]`` are bitmasks over sources of the exogenous
    row and of the generic mixing-matrix row of ``x_k``.
    """

    A_sup: np.ndarray
    B_sup: np.ndarray
    parents: list
    bmask: list
    wmask: list
    row_resamples: int = 0


def _draw_structure(rng, cfg: GenerationConfig, p: int, m: int) -> Optional[Structure]:
    n_shared = m - p if cfg.distinct_source else m
    q_src = cfg.source_prob
    A_sup = np.tril(rng.random((p, p)) < cfg.edge_prob, k=-1)
    shared = rng.random((p, n_shared)) < q_src
    for j in np.flatnonzero(~shared.any(axis=0)):
        col = shared[:, j]
        while not col.any():
            col[:] = rng.random(p) < q_src
    if cfg.distinct_source:
        B_sup = np.hstack([np.eye(p, dtype=bool), shared])
    else:
        B_sup = shared
    offset = p if cfg.distinct_source else 0
    parents = [np.flatnonzero(A_sup[k]).tolist() for k in range(p)]
    bmask = _masks(B_sup)
    wmask = []
    resamples = 0
    for k in range(p):
        tries = 0
        while True:
            wk = bmask[k]
            for j in parents[k]:
                wk |= wmask[j]
            # parents' rows are subsets of wk by construction; need strictness
            if wk and all(wmask[j] != wk for j in parents[k]):
                break
            if tries >= cfg.max_row_resamples:
                return None
            tries += 1
            resamples += 1
            B_sup[k, offset:] = rng.random(n_shared) < q_src
            bmask[k] = _masks(B_sup[k:k + 1])[0]
        wmask.append(wk)
    if not B_sup.any(axis=0).all():
        return None
    return Structure(A_sup, B_sup, parents, bmask, wmask, resamples)


def _materialize(rng, cfg: GenerationConfig, st: Structure) -> Optional[Pscm]:
    p, m = st.B_sup.shape
    A = np.where(st.A_sup, _coefficients(rng, (p, p), cfg.coeff_interval), 0.0)
    B = np.where(st.B_sup, _coefficients(rng, (p, m), cfg.coeff_interval), 0.0)
    obs_perm = rng.permutation(p)
    src_perm = rng.permutation(m)
    A_out = np.zeros_like(A)
    A_out[np.ix_(obs_perm, obs_perm)] = A
    B_out = np.zeros_like(B)
    B_out[np.ix_(obs_perm, src_perm)] = B
    # natural index t lands at obs_perm[t], so this lists causes first
    model = Pscm(A_out, B_out, order=tuple(int(i) for i in obs_perm))
    report = check_assumptions(model, spot_checks=0)
    if not (report.assumption2_ok and report.faithfulness_a_ok):
        return None
    return model


def generate_random_model(cfg: GenerationConfig, rng=None, accept=None, max_attempts=None) -> Pscm:
    """Draw a random valid P-SCM.

    Causal edges appear with probability ``d_e/(p-1)`` and source links with
    probability ``d_o/p``.  A row that breaks the strict-superset requirement
    on one of its causal edges has its source pattern redrawn, up to
    ``max_row_resamples`` times; after that the whole model is rejected.
    Observed and source labels are shuffled at the end.

    ``accept``, if given, is a predicate on the drawn :class:`Structure`;
    valid structures are drawn until one is accepted, and coefficients are
    only drawn for that one.  ``meta["attempts"]`` counts valid structures
    drawn, ``meta["rejections"]`` the invalid ones.  With ``max_attempts``
    set, ``None`` is returned once that many attempts fail.
    """
    p = int(cfg.p)
    m = cfg.n_sources()
    if p < 2:
        raise ConfigError("need p >= 2")
    if m < 1:
        raise ConfigError("need m >= 1")
    lo, hi = cfg.coeff_interval
    if not (0 < lo <= hi):
        raise ConfigError(f"bad coefficient interval {cfg.coeff_interval}")
    if cfg.d_e < 0 or cfg.d_o < 0:
        raise ConfigError("degrees must be nonnegative")
    if cfg.distinct_source and m < p:
        raise ConfigError(f"distinct_source needs m >= p (got m={m}, p={p})")
    n_shared = m - p if cfg.distinct_source else m
    if n_shared > 0 and cfg.source_prob == 0.0:
        raise ConfigError("d_o = 0 leaves every shared source disconnected")

    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    rejections = attempts = row_resamples = 0
    while True:
        st = _draw_structure(rng, cfg, p, m)
        if st is None:
            rejections += 1
            if rejections > cfg.max_rejections:
                raise ConfigError(f"no valid model after {rejections} rejections")
            continue
        row_resamples += st.row_resamples
        attempts += 1
        if accept is None or accept(st):
            model = _materialize(rng, cfg, st)
            if model is not None:
                cfg_dict = dataclasses.asdict(cfg)
                cfg_dict["coeff_interval"] = list(cfg.coeff_interval)
                model.meta = {
                    "seed": cfg.seed,
                    "config": cfg_dict,
                    "attempts": attempts,
                    "rejections": rejections,
                    "row_resamples": row_resamples,
                }
                return model
            # numerically degenerate draw; count it as rejected
            rejections += 1
        if max_attempts is not None and attempts >= max_attempts:
            return None


SourceSampler = Callable[[np.random.Generator, tuple], np.ndarray]

_SOURCE_DISTS = {
    "uniform": lambda rng, shape: rng.uniform(-0.5, 0.5, size=shape),
    "laplace": lambda rng, shape: rng.laplace(0.0, 1.0, size=shape),
    "gaussian": lambda rng, shape: rng.standard_normal(size=shape),
}


def simulate(model: Pscm, n: int, dist: Union[str, SourceSampler] = "uniform", seed=None) -> Dataset:
    """Draw ``n`` i.i.d. source vectors and return ``X = W S``.

    ``dist`` is ``"uniform"`` (on [-0.5, 0.5]), ``"laplace"``, ``"gaussian"`` or a
    callable ``(rng, shape) -> array``.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    rng = np.random.default_rng(seed)
    if callable(dist):
        sampler, name = dist, getattr(dist, "__name__", "custom")
    else:
        try:
            sampler, name = _SOURCE_DISTS[dist], dist
        except KeyError:
            raise ConfigError(f"unknown source distribution {dist!r}") from None
    S = np.asarray(sampler(rng, (model.m, n)), dtype=float)
    W = mixing_matrix(model).W
    return Dataset(W @ S, source_dist=name)


def scramble(W: MixingMatrix, seed=None, return_transform: bool = False):
    """Return ``W P Gamma`` for a random permutation and random nonzero scaling.

    Scales have magnitude in [0.5, 2] and a random sign.
    """
    rng = np.random.default_rng(seed)
    m = W.m
    perm = rng.permutation(m)
    gamma = rng.uniform(0.5, 2.0, size=m) * rng.choice([-1.0, 1.0], size=m)
    out = MixingMatrix(W.W[:, perm] * gamma, eps=W.eps)
    if return_transform:
        return out, perm, gamma
    return out


def _structural_rank(sup):
    from .identifiability import max_matching_size

    return max_matching_size(sup)


def check_assumptions(model: Pscm, eps: float = DEFAULT_EPS, spot_checks: int = 100, seed=0) -> AssumptionReport:
    """Check the strict-superset requirement on edges and both faithfulness parts.

    Faithfulness (b) is only spot-checked: ``spot_checks`` random square
    submatrices of ``B`` must have numerical rank equal to their structural
    (matching) rank.
    """
    mix = mixing_matrix(model, eps)
    sup = mix.support

    a2_ok, a2_w = True, None
    for j, i in sorted(model.edges(), key=lambda e: (e[1], e[0])):
        if not np.any(sup[i] & ~sup[j]):
            a2_ok, a2_w = False, (j, i)
            break

    fa_ok, fa_w = True, None
    anc = model.ancestors()
    for i in range(model.p):
        for j in np.flatnonzero(anc[i]):
            if np.any(sup[j] & ~sup[i]):
                fa_ok, fa_w = False, (int(j), i)
                break
        if not fa_ok:
            break

    fb_ok, fb_w, checked = True, None, 0
    if spot_checks > 0:
        rng = np.random.default_rng(seed)
        B = model.B
        Bsup = np.abs(B) > eps
        kmax = min(model.p, model.m)
        for _ in range(spot_checks):
            size = int(rng.integers(1, kmax + 1))
            rows = np.sort(rng.choice(model.p, size=size, replace=False))
            cols = np.sort(rng.choice(model.m, size=size, replace=False))
            sub = B[np.ix_(rows, cols)]
            checked += 1
            if numerical_rank(sub, RANK_RTOL) != _structural_rank(Bsup[np.ix_(rows, cols)]):
                fb_ok, fb_w = False, (rows.tolist(), cols.tolist())
                break
    return AssumptionReport(a2_ok, a2_w, fa_ok, fa_w, fb_ok, fb_w, checked)


def support_from_graph(model: Pscm) -> np.ndarray:
    """Generic support of ``W``: each row's own sources plus its ancestors' sources."""
    anc = model.ancestors()
    Bsup = model.B != 0
    sup = Bsup.copy()
    for i in range(model.p):
        for j in np.flatnonzero(anc[i]):
            sup[i] |= Bsup[j]
    return sup


def all_square_submatrices(shape: Sequence[int], size: int):
    """Iterate ``(rows, cols)`` index pairs of every ``size x size`` submatrix."""
    p, m = shape
    for rows in itertools.combinations(range(p), size):
        for cols in itertools.combinations(range(m), size):
            yield rows, cols
