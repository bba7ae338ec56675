"""Identifiability checks: possible parents, unique-component layers,
the unique-components and marriage conditions, and the distinct-source check.

Sources and variables are 0-based indices.  Component sets are frozensets of
source indices.
"""

from __future__ import annotations

import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from ._linalg import RANK_RTOL, numerical_rank
from .errors import (
    AssumptionViolationError,
    ConfigError,
    DistinctSourceRequiredError,
    InternalConsistencyError,
)
from .model import DEFAULT_EPS, MixingMatrix, Pscm, mixing_matrix

log = logging.getLogger(__name__)

EXHAUSTIVE_LIMIT = 12
MARRIAGE_METHODS = ("hall", "rank", "both")
VARIANTS = ("count", "full")


@dataclass(frozen=True)
class PossibleParentSet:
    k: int
    members: tuple

    def __contains__(self, i):
        return i in self.members

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


@dataclass(frozen=True)
class UniqueComponentLayers:
    """Result of the iterative unique-component peeling.

    ``layers[n]`` is a list of ``(i, U)`` pairs found at iteration ``n + 1``;
    ``index_sets[n]`` is the index set J at iteration ``n`` (``index_sets[0]``
    holds every input index).
    """

    target: Optional[int]
    layers: tuple
    residual: frozenset
    index_sets: tuple

    def unique_sets(self) -> dict:
        out = {i: U for layer in self.layers for i, U in layer}
        for i in self.residual:
            out[i] = frozenset()
        return out

    def layer_of(self, i) -> Optional[int]:
        for n, layer in enumerate(self.layers):
            if any(j == i for j, _ in layer):
                return n
        return None


@dataclass
class VariableCheck:
    k: int
    unique_ok: bool
    marriage_ok: bool
    witness: Optional[dict] = None
    parents: tuple = ()
    residual: tuple = ()

    @property
    def ok(self) -> bool:
        return self.unique_ok and self.marriage_ok


@dataclass
class ConditionReport:
    variant: str
    marriage_method: str
    per_variable: list = field(default_factory=list)
    aborted: Optional[dict] = None

    @property
    def overall(self) -> bool:
        return self.aborted is None and all(v.ok for v in self.per_variable)

    def failures(self):
        return [v for v in self.per_variable if not v.ok]

    def to_dict(self) -> dict:
        out = {
            "overall": self.overall,
            "variant": self.variant,
            "marriage_method": self.marriage_method,
            "per_variable": [
                {
                    "k": v.k,
                    "unique_ok": v.unique_ok,
                    "marriage_ok": v.marriage_ok,
                    "witness": v.witness,
                    "possible_parents": list(v.parents),
                    "residual": list(v.residual),
                }
                for v in self.per_variable
            ],
        }
        if self.aborted is not None:
            out["aborted"] = self.aborted
        return out


# -- supports -----------------------------------------------------------------


def _support(M, eps):
    return np.abs(np.asarray(M, dtype=float)) > eps


def _comp_sets(sup) -> list:
    return [frozenset(int(j) for j in np.flatnonzero(row)) for row in sup]


def possible_parent_matrix(sup) -> np.ndarray:
    """``pp[k, i]`` is True iff support row ``i`` is a strict subset of row ``k``."""
    sup = np.asarray(sup, dtype=bool)
    # row i not covered by row k anywhere -> not a subset
    outside = sup[None, :, :] & ~sup[:, None, :]
    subset = ~outside.any(axis=2)
    counts = sup.sum(axis=1)
    return subset & (counts[None, :] < counts[:, None])


def possible_parents(W: MixingMatrix, k: int) -> PossibleParentSet:
    """Variables whose component set is a strict subset of ``Comp(x_k)``."""
    if not 0 <= k < W.p:
        raise ConfigError(f"variable index {k} out of range for p={W.p}")
    sup = W.support
    pp = possible_parent_matrix(sup)
    return PossibleParentSet(int(k), tuple(int(i) for i in np.flatnonzero(pp[k])))


# -- unique components ----------------------------------------------------------


def unique_component_layers(mixtures: Iterable, target: Optional[int] = None) -> UniqueComponentLayers:
    """Peel unique components off a collection of source mixtures.

    ``mixtures`` is an iterable of ``(index, component_set)``.  At each round,
    a member's unique set is what it holds that no other remaining member
    holds; members with a nonempty unique set form the next layer and are
    removed.  Stops when a round removes nobody.
    """
    comps = {}
    J = []
    for i, c in mixtures:
        comps[i] = frozenset(c)
        J.append(i)
    index_sets = [tuple(J)]
    layers = []
    while J:
        counts = Counter(s for i in J for s in comps[i])
        U = {i: frozenset(s for s in comps[i] if counts[s] == 1) for i in J}
        layer = tuple((i, U[i]) for i in J if U[i])
        if not layer:
            break
        layers.append(layer)
        J = [i for i in J if not U[i]]
        index_sets.append(tuple(J))
    return UniqueComponentLayers(target, tuple(layers), frozenset(J), tuple(index_sets))


def _layers_for(Bsup, members, k=None):
    comps = _comp_sets(Bsup[list(members)]) if len(members) else []
    return unique_component_layers(zip(members, comps), target=k)


def check_unique_components(comp_k: frozenset, layers: UniqueComponentLayers, comps: dict):
    """Both clauses of the unique-components condition on plain sets.

    ``comps`` maps each possible parent to its mixture's component set.
    """
    for layer in layers.layers:
        for i, U in layer:
            hit = sorted(comp_k & U)
            if hit:
                return False, {"condition": "unique_components", "clause": "i", "source": hit[0], "parent": i}
    for i in sorted(layers.residual):
        hit = sorted(comp_k & comps[i])
        if hit:
            return False, {"condition": "unique_components", "clause": "ii", "source": hit[0], "parent": i}
    return True, None


def check_unique_components_condition(model: Pscm, k: int, layers: Optional[UniqueComponentLayers] = None,
                                      eps: float = DEFAULT_EPS):
    """Condition on the exogenous connections of ``x_k`` relative to its possible parents.

    Returns ``(ok, witness)``; the witness names the offending source and parent.
    """
    Bsup = _support(model.B, eps)
    if layers is None:
        pp = possible_parents(mixing_matrix(model, eps), k)
        layers = _layers_for(Bsup, pp.members, k)
    members = list(layers.index_sets[0]) if layers.index_sets else []
    comps = dict(zip(members, _comp_sets(Bsup[members]))) if members else {}
    comp_k = frozenset(int(j) for j in np.flatnonzero(Bsup[k]))
    return check_unique_components(comp_k, layers, comps)


# -- marriage -------------------------------------------------------------------


def _matching(sup):
    sup = np.asarray(sup, dtype=bool)
    if sup.shape[0] == 0:
        return np.zeros(0, dtype=int)
    if sup.shape[1] == 0:
        return np.full(sup.shape[0], -1)
    # perm_type="column" gives, for each row, its matched column (or -1)
    return maximum_bipartite_matching(csr_matrix(sup.astype(np.int8)), perm_type="column")


def max_matching_size(sup) -> int:
    """Size of a maximum matching in the row/column support graph."""
    return int(np.sum(_matching(sup) >= 0))


def _deficient_set(sup, match):
    """Hall violator reached by alternating paths from an unmatched row."""
    col_owner = {int(c): r for r, c in enumerate(match) if c >= 0}
    start = int(np.flatnonzero(match < 0)[0])
    rows, cols = {start}, set()
    frontier = [start]
    while frontier:
        r = frontier.pop()
        for c in np.flatnonzero(sup[r]):
            c = int(c)
            if c in cols:
                continue
            cols.add(c)
            owner = col_owner.get(c)
            if owner is not None and owner not in rows:
                rows.add(owner)
                frontier.append(owner)
    return sorted(rows), sorted(cols)


def marriage_exhaustive(sup):
    """Brute-force Hall check.  Returns ``(ok, smallest_violating_rows)``."""
    sup = np.asarray(sup, dtype=bool)
    n = sup.shape[0]
    for size in range(1, n + 1):
        for rows in itertools.combinations(range(n), size):
            if np.count_nonzero(sup[list(rows)].any(axis=0)) < size:
                return False, list(rows)
    return True, None


def check_marriage_condition(B_k, method: str = "hall", eps: float = DEFAULT_EPS,
                             labels: Optional[Sequence] = None,
                             exhaustive_limit: int = EXHAUSTIVE_LIMIT):
    """Hall's condition on the rows of ``B_k``.

    ``hall`` looks for a matching saturating every row; ``rank`` compares the
    numerical row rank with the row count; ``both`` runs the two and raises
    :class:`InternalConsistencyError` if they disagree.  Returns
    ``(ok, witness)`` where the witness lists the deficient rows (mapped
    through ``labels``) and the sources they cover.
    """
    if method not in MARRIAGE_METHODS:
        raise ConfigError(f"unknown marriage method {method!r}")
    B_k = np.atleast_2d(np.asarray(B_k, dtype=float))
    n = B_k.shape[0] if B_k.size else 0
    if n == 0:
        return True, None
    sup = _support(B_k, eps)
    nz = sup.any(axis=0)
    sup_nz, B_nz = sup[:, nz], B_k[:, nz]

    hall_ok = rank_ok = None
    match = None
    if method in ("hall", "both"):
        match = _matching(sup_nz)
        hall_ok = bool(np.all(match >= 0))
    if method in ("rank", "both"):
        rank_ok = numerical_rank(B_nz, RANK_RTOL) == n
    if method == "both" and hall_ok != rank_ok:
        raise InternalConsistencyError(
            f"matching says {hall_ok}, rank says {rank_ok}; coefficients look non-generic"
        )
    ok = hall_ok if hall_ok is not None else rank_ok
    if ok:
        return True, None

    if n <= exhaustive_limit:
        _, rows = marriage_exhaustive(sup_nz)
        if rows is None:
            # rank failed on a matchable pattern: numerical cancellation
            rows = list(range(n))
    else:
        if match is None:
            match = _matching(sup_nz)
        rows = _deficient_set(sup_nz, match)[0] if np.any(match < 0) else list(range(n))
    col_ids = np.flatnonzero(nz)
    covered = sorted(int(col_ids[c]) for c in np.flatnonzero(sup_nz[rows].any(axis=0)))
    names = [labels[r] if labels is not None else r for r in rows]
    return False, {"condition": "marriage", "subset": names, "sources": covered}


# -- whole-model verification ---------------------------------------------------


def infer_causal_order(W, randomize_ties: bool = False, seed=None) -> tuple:
    """Rows sorted by ascending nonzero count.

    Ties keep index order unless ``randomize_ties`` is set, in which case they
    are shuffled with ``seed``.  Strict subsets have strictly fewer nonzeros,
    so every possible parent precedes its target either way.
    """
    sup = W.support if isinstance(W, MixingMatrix) else _support(W, DEFAULT_EPS)
    counts = sup.sum(axis=1)
    if randomize_ties:
        noise = np.random.default_rng(seed).random(len(counts))
        return tuple(int(i) for i in np.lexsort((noise, counts)))
    return tuple(int(i) for i in np.argsort(counts, kind="stable"))


def verify_model(model: Pscm, variant: str = "full", marriage: str = "hall",
                 eps: float = DEFAULT_EPS, fail_fast: bool = False) -> ConditionReport:
    """Check both identifiability conditions for every variable.

    ``variant="count"`` is the cheaper check used for satisfiability counts: the
    marriage step only compares the nonzero-column count of the residual
    rows against their number.  ``variant="full"`` runs a complete Hall
    check over all possible parents.  A direct cause missing from the
    possible parent set raises :class:`AssumptionViolationError`; the
    partial report is attached to the exception.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    if marriage not in MARRIAGE_METHODS:
        raise ConfigError(f"unknown marriage method {marriage!r}")
    W = mixing_matrix(model, eps)
    pp = possible_parent_matrix(W.support)
    Bsup = _support(model.B, eps)
    comps_all = _comp_sets(Bsup)
    report = ConditionReport(variant=variant, marriage_method=marriage)

    for k in infer_causal_order(W):
        members = tuple(int(i) for i in np.flatnonzero(pp[k]))
        missing = [int(j) for j in np.flatnonzero(model.A[k]) if not pp[k, j]]
        if missing:
            report.per_variable.sort(key=lambda v: v.k)
            edge = (missing[0], int(k))
            report.aborted = {"reason": "direct cause outside possible parent set", "edge": list(edge)}
            raise AssumptionViolationError(
                f"x{edge[0]} -> x{edge[1]} but Comp(x{edge[0]}) is not a strict subset of Comp(x{edge[1]})",
                edge=edge, partial=report,
            )
        comps = {i: comps_all[i] for i in members}
        layers = unique_component_layers(((i, comps[i]) for i in members), target=k)
        unique_ok, witness = check_unique_components(comps_all[k], layers, comps)

        if variant == "count":
            resid = sorted(layers.residual)
            n_cols = int(Bsup[resid].any(axis=0).sum()) if resid else 0
            marriage_ok = n_cols >= len(resid)
            m_witness = None if marriage_ok else {
                "condition": "marriage", "subset": resid,
                "sources": [int(j) for j in np.flatnonzero(Bsup[resid].any(axis=0))],
            }
        else:
            marriage_ok, m_witness = check_marriage_condition(
                model.B[list(members)] if members else np.zeros((0, model.m)),
                method=marriage, eps=eps, labels=members,
            )
        if witness is None:
            witness = m_witness
        report.per_variable.append(VariableCheck(
            int(k), bool(unique_ok), bool(marriage_ok), witness, members, tuple(sorted(layers.residual)),
        ))
        if fail_fast and not (unique_ok and marriage_ok):
            break
    report.per_variable.sort(key=lambda v: v.k)
    return report


def _private_sources(Bsup):
    """``owner[j]`` = the single variable touching source ``j``, or -1."""
    counts = Bsup.sum(axis=0)
    owner = np.where(counts == 1, np.argmax(Bsup, axis=0), -1)
    return owner


def check_distinct_source_condition(model: Pscm, eps: float = DEFAULT_EPS):
    """Path condition for models in which every variable owns a private source.

    For each exogenous link ``s_j -> x_k`` the number of possible parents of
    ``x_k`` that also hold ``s_j`` must be 0 or at least 2.  Returns
    ``(ok, witness)``.
    """
    Bsup = _support(model.B, eps)
    owner = _private_sources(Bsup)
    lacking = sorted(set(range(model.p)) - set(int(o) for o in owner if o >= 0))
    if lacking:
        raise DistinctSourceRequiredError(f"variables {lacking} have no private source")
    pp = possible_parent_matrix(mixing_matrix(model, eps).support)
    paths = None
    for k in range(model.p):
        members = np.flatnonzero(pp[k])
        for j in np.flatnonzero(Bsup[k]):
            holders = [int(i) for i in members if Bsup[i, j]]
            if len(holders) == 1:
                if paths is None:
                    paths = _path_counts(model.A)
                n_paths = int(round(paths[k, holders[0]]))
                if n_paths > 1:
                    log.info("x%d reaches x%d by %d paths; counted as one holder of s%d",
                             holders[0], k, n_paths, j)
                return False, {"source": int(j), "variable": int(k), "holders": holders, "paths": n_paths}
    return True, None


def _path_counts(A):
    """``N[i, j]`` = number of directed paths from ``x_j`` to ``x_i``."""
    E = (np.asarray(A) != 0).astype(float)
    p = E.shape[0]
    return np.linalg.solve(np.eye(p) - E, np.eye(p)) - np.eye(p)


# -- fast screen on zero patterns -------------------------------------------------


def _kuhn_saturates(rows) -> bool:
    """Augmenting-path matching on bitmask rows; True if every row is matched."""
    owner = {}

    def augment(r, seen):
        cand = rows[r] & ~seen[0]
        while cand:
            bit = cand & -cand
            cand ^= bit
            seen[0] |= bit
            if bit not in owner or augment(owner[bit], seen):
                owner[bit] = r
                return True
        return False

    return all(augment(r, [0]) for r in range(len(rows)))


def structure_satisfies(st, variant: str = "full") -> bool:
    """Both conditions evaluated on a zero pattern with generic coefficients.

    ``st`` is a :class:`pscm.model.Structure`.  Agrees with
    :func:`verify_model` on the materialized model with probability one; it
    exists because the Monte-Carlo loops call it thousands of times per
    accepted model.
    """
    b, w = st.bmask, st.wmask
    p = len(b)
    for k in range(p):
        wk = w[k]
        members = [i for i in range(p) if i != k and (w[i] | wk) == wk and w[i] != wk]
        if any(j not in members for j in st.parents[k]):
            return False
        bk = b[k]
        remaining = members
        while remaining:
            once = twice = 0
            for i in remaining:
                twice |= once & b[i]
                once |= b[i]
            uniq = once & ~twice
            if bk & uniq:
                # some parent's unique component feeds x_k directly
                return False
            nxt = [i for i in remaining if not b[i] & uniq]
            if len(nxt) == len(remaining):
                break
            remaining = nxt
        for i in remaining:
            if bk & b[i]:
                return False
        if variant == "count":
            cover = 0
            for i in remaining:
                cover |= b[i]
            if bin(cover).count("1") < len(remaining):
                return False
        elif members and not _kuhn_saturates([b[i] for i in members]):
            return False
    return True
