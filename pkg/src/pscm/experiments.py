"""Monte-Carlo experiments: satisfiability (attempts until a model meets both
conditions) and end-to-end recovery in the four standard settings."""

from __future__ import annotations

import csv
import itertools
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, PscmError
from .evaluation import compare_adjacency, ica_success, match_B
from .identifiability import structure_satisfies, verify_model
from .io import fmt
from .model import DEFAULT_EPS, GenerationConfig, generate_random_model, mixing_matrix, simulate
from .recovery import RecoveryConfig, recover
from .separation import BootstrapConfig, IcaConfig, bootstrap_prune, oracle_mixing

log = logging.getLogger(__name__)

# extra sources relative to p, degrees, private sources, wanted verdict
SETTINGS = {
    "P-SCM_Equal": dict(extra=0, d_e=1.5, d_o=1.5, distinct=False, satisfying=True),
    "P-SCM_Fewer": dict(extra=-2, d_e=1.5, d_o=1.5, distinct=False, satisfying=True),
    "DS-P-SCM": dict(extra=3, d_e=2.0, d_o=1.5, distinct=True, satisfying=True),
    "P-SCM_NonUnique": dict(extra=0, d_e=1.5, d_o=1.5, distinct=False, satisfying=False),
}
KINDS = ("satisfiability", "recovery")
MODES = ("oracle", "ica")
GRID_KEYS = {"p": "p", "r": "r", "m": "m", "de": "d_e", "d_e": "d_e", "do": "d_o", "d_o": "d_o"}
METRICS = ("shd", "shd_per_edge", "frobenius", "precision", "recall", "n_true", "n_hat")


@dataclass
class ExperimentSpec:
    kind: str
    grid: list
    trials: int = 10
    mode: str = "oracle"
    setting: str = "P-SCM_Equal"
    seed: int = 0
    n: int = 1000
    variant: str = "full"
    marriage: str = "hall"
    eps: float = DEFAULT_EPS
    prune: float = 0.1
    n_boot: int = 50
    confidence: float = 0.95
    attempt_cap: int = 10**6
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.setting not in SETTINGS:
            raise ConfigError(f"unknown setting {self.setting!r}; choose from {sorted(SETTINGS)}")
        if not self.grid:
            raise ConfigError("empty grid")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")


def _frange(spec: str):
    lo, hi, step = (float(x) for x in spec.split(":"))
    if step <= 0:
        raise ConfigError(f"range step must be positive: {spec!r}")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 10) for i in range(n)]


def parse_grid(text: str) -> list:
    """``"p=10;r=1.0:2.6:0.2;de=2;do=1.5"`` -> list of parameter dicts.

    Values are single numbers, comma lists or inclusive ``lo:hi:step`` ranges;
    the grid is their Cartesian product.
    """
    axes = {}
    for part in filter(None, (s.strip() for s in text.split(";"))):
        if "=" not in part:
            raise ConfigError(f"grid entry {part!r} is not key=value")
        key, val = (s.strip() for s in part.split("=", 1))
        if key not in GRID_KEYS:
            raise ConfigError(f"unknown grid key {key!r}")
        try:
            if ":" in val:
                values = _frange(val)
            else:
                values = [float(v) for v in val.split(",")]
        except ValueError:
            raise ConfigError(f"bad grid value {val!r} for {key}") from None
        axes[GRID_KEYS[key]] = values
    if "p" not in axes:
        raise ConfigError("grid must set p")
    if "r" in axes and "m" in axes:
        raise ConfigError("grid sets both r and m")
    keys = list(axes)
    points = []
    for combo in itertools.product(*(axes[k] for k in keys)):
        pt = dict(zip(keys, combo))
        pt["p"] = int(pt["p"])
        if "m" in pt:
            pt["m"] = int(pt["m"])
        points.append(pt)
    return points


def generation_config(point: dict, setting: str) -> GenerationConfig:
    s = SETTINGS[setting]
    p = int(point["p"])
    if "m" in point:
        m, r = int(point["m"]), None
    elif "r" in point:
        m, r = None, float(point["r"])
    else:
        m, r = p + s["extra"], None
    return GenerationConfig(
        p=p, m=m, r=r,
        d_e=float(point.get("d_e", s["d_e"])),
        d_o=float(point.get("d_o", s["d_o"])),
        distinct_source=s["distinct"],
    )


def trial_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1)[0])


def sample_model(cfg: GenerationConfig, rng, want_satisfying=True, variant="full", marriage="hall",
                 eps=DEFAULT_EPS, cap=10**6):
    """Draw models until one has the wanted verdict.

    Returns ``(model_or_None, attempts, rejections)``; ``None`` means the cap
    was hit.  Candidates are screened on their zero pattern and the accepted
    one is confirmed numerically.
    """
    def accept(st):
        return structure_satisfies(st, variant) == want_satisfying

    attempts = rejections = 0
    while attempts < cap:
        model = generate_random_model(cfg, rng=rng, accept=accept, max_attempts=cap - attempts)
        if model is None:
            return None, cap, rejections
        attempts += model.meta["attempts"]
        rejections += model.meta["rejections"]
        try:
            ok = verify_model(model, variant, marriage, eps).overall
        except PscmError:
            ok = False
        if ok == want_satisfying:
            model.meta["attempts"] = attempts
            model.meta["rejections"] = rejections
            return model, attempts, rejections
        log.warning("pattern screen and numeric check disagree; redrawing")
    return None, attempts, rejections


def _satisfiability_trial(args):
    spec, point, idx, t = args
    seed = trial_seed(spec.seed, idx)
    rng = np.random.default_rng(seed)
    cfg = generation_config(point, spec.setting)
    t0 = time.perf_counter()
    model, attempts, rejections = sample_model(
        cfg, rng, True, spec.variant, spec.marriage, spec.eps, spec.attempt_cap)
    return {
        "setting": spec.setting, "p": cfg.p, "m": cfg.n_sources(), "r": cfg.n_sources() / cfg.p,
        "d_e": cfg.d_e, "d_o": cfg.d_o, "trial": t, "seed": seed,
        "attempts": attempts, "rejections": rejections, "censored": model is None,
        "wall_time": time.perf_counter() - t0,
    }


def _recovery_trial(args):
    spec, point, idx, t = args
    seed = trial_seed(spec.seed, idx)
    rng = np.random.default_rng(seed)
    cfg = generation_config(point, spec.setting)
    want = SETTINGS[spec.setting]["satisfying"]
    t0 = time.perf_counter()
    row = {"setting": spec.setting, "mode": spec.mode, "p": cfg.p, "m": cfg.n_sources(),
           "d_e": cfg.d_e, "d_o": cfg.d_o, "trial": t, "seed": seed}
    model, attempts, _ = sample_model(cfg, rng, want, spec.variant, spec.marriage, spec.eps, spec.attempt_cap)
    row["attempts"] = attempts
    row.update({"ica_success": None, "error": None})
    row.update({f"A_{k}": None for k in METRICS})
    row.update({f"B_{k}": None for k in METRICS})
    if model is None:
        row["error"] = "attempt cap reached"
        row["wall_time"] = time.perf_counter() - t0
        return row
    W_true = mixing_matrix(model, spec.eps).W
    sub_seed = int(rng.integers(2**31 - 1))
    try:
        if spec.mode == "oracle":
            W_tilde = oracle_mixing(model, sub_seed)
            # NonUnique inputs are best effort, so no residual contract there
            tol = 1e-6 if want else np.inf
        else:
            data = simulate(model, spec.n, seed=sub_seed)
            W_tilde = bootstrap_prune(
                data, IcaConfig(m=model.m, seed=sub_seed),
                BootstrapConfig(n_boot=spec.n_boot, confidence=spec.confidence))
            tol = np.inf
        row["ica_success"] = ica_success(W_true, W_tilde.W, threshold=spec.eps)
        res = recover(W_tilde.W, RecoveryConfig(eps=spec.eps, ls_residual_tol=tol, prune_threshold=spec.prune))
        ra = compare_adjacency(model.A, res.A_pruned, spec.prune)
        _, rb = match_B(model.B, res.B_hat, spec.prune)
        row.update({f"A_{k}": getattr(ra, k) for k in METRICS})
        row.update({f"B_{k}": getattr(rb, k) for k in METRICS})
    except PscmError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    row["wall_time"] = time.perf_counter() - t0
    return row


def run_experiment(spec: ExperimentSpec) -> list:
    """Run every (grid point, trial) pair; rows come back in trial-index order."""
    jobs = [(spec, pt, i * spec.trials + t, t) for i, pt in enumerate(spec.grid) for t in range(spec.trials)]
    fn = _satisfiability_trial if spec.kind == "satisfiability" else _recovery_trial
    workers = spec.workers or os.cpu_count() or 1
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=1))


def _stats(values):
    v = [float(x) for x in values if x is not None]
    if not v:
        return {"mean": None, "std": None, "n": 0}
    a = np.array(v)
    return {"mean": float(a.mean()), "std": float(a.std()), "n": len(v)}


def aggregate(rows: list, kind: str) -> dict:
    """Mean and (population) std per grid point; wall time is left out."""
    if kind == "satisfiability":
        keys = ("setting", "p", "m", "d_e", "d_o")
    else:
        keys = ("setting", "mode", "p", "m", "d_e", "d_o")
    groups = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for key, grp in groups.items():
        rec = dict(zip(keys, key))
        rec["trials"] = len(grp)
        if kind == "satisfiability":
            rec["censored"] = sum(bool(r["censored"]) for r in grp)
            rec["attempts"] = _stats(r["attempts"] for r in grp)
            rec["rejections"] = _stats(r["rejections"] for r in grp)
        else:
            done = [r for r in grp if not r["error"]]
            succ = [r for r in done if r["ica_success"]]
            rec["failed"] = len(grp) - len(done)
            rec["ica_success_rate"] = len(succ) / len(grp)
            for label, subset in (("all", done), ("successful", succ)):
                rec[label] = {"count": len(subset)}
                for prefix in ("A_", "B_"):
                    for k in METRICS:
                        rec[label][prefix + k] = _stats(r[prefix + k] for r in subset)
        out.append(rec)
    return {"kind": kind, "groups": out}


# -- per-trial CSV ---------------------------------------------------------------


def write_rows_csv(rows: list, path):
    if not rows:
        raise ConfigError("no rows to write")
    fields = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([fmt(r[f]) for f in fields])


_INT_FIELDS = {"p", "m", "trial", "seed", "attempts", "rejections",
               "A_shd", "A_n_true", "A_n_hat", "B_shd", "B_n_true", "B_n_hat"}
_STR_FIELDS = {"setting", "mode", "error"}


def _parse_cell(name, text):
    if text == "":
        return None
    if name in _STR_FIELDS:
        return text
    if text in ("true", "false"):
        return text == "true"
    if name in _INT_FIELDS:
        return int(text)
    return float(text)


def read_rows_csv(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [{k: _parse_cell(k, v) for k, v in row.items()} for row in reader]


def spec_dict(spec: ExperimentSpec) -> dict:
    d = asdict(spec)
    d.pop("workers")
    return d
