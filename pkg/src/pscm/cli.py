"""``pscm`` command-line tool.

Exit codes: 0 success (a negative verdict is still a success), 1 usage
error, 2 data or contract error (a JSON error object goes to stderr).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import io as pio
from .errors import AssumptionViolationError, ConfigError, ParseError, PscmError
from .evaluation import compare_adjacency, ica_success, match_B
from .experiments import (
    SETTINGS, ExperimentSpec, aggregate, parse_grid, run_experiment, sample_model, spec_dict, write_rows_csv,
)
from .identifiability import check_distinct_source_condition, verify_model
from .model import DEFAULT_EPS, GenerationConfig, generate_random_model, mixing_matrix, simulate
from .recovery import RecoveryConfig, recover
from .separation import BootstrapConfig, IcaConfig, bootstrap_prune, oracle_mixing

log = logging.getLogger("pscm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def _names(text, count, prefix):
    if text is None:
        return None
    names = [s.strip() for s in text.split(",")]
    if len(names) != count:
        raise UsageError(f"--{prefix}names lists {len(names)} names for {count} variables")
    return names


# -- commands -----------------------------------------------------------------------


def cmd_generate(a):
    if a.m is not None and a.r is not None:
        raise UsageError("give --m or --r, not both")
    cfg = GenerationConfig(p=a.p, m=a.m, r=a.r, d_e=a.de, d_o=a.do, distinct_source=a.distinct, seed=a.seed)
    if a.satisfying:
        model, attempts, _ = sample_model(cfg, np.random.default_rng(a.seed), True, a.variant, cap=a.attempt_cap)
        if model is None:
            raise ConfigError(f"no satisfying model within {attempts} attempts")
        model.meta["seed"] = a.seed
        model.meta["config"] = {k: v for k, v in vars(cfg).items()}
        model.meta["config"]["coeff_interval"] = list(cfg.coeff_interval)
    else:
        model = generate_random_model(cfg)
    pio.write_model(model, a.out)


def cmd_simulate(a):
    model = pio.read_model(a.model)
    data = simulate(model, a.n, dist=a.dist, seed=a.seed)
    pio.write_matrix_csv(data.X, a.out)


def cmd_separate(a):
    if a.mode == "oracle":
        if a.model is None:
            raise UsageError("--mode oracle needs --model")
        W = oracle_mixing(pio.read_model(a.model), a.seed)
        pio.write_matrix_csv(W.W, a.out)
        return
    if a.data is None:
        raise UsageError("--mode ica needs --data")
    X, _ = pio.read_matrix_csv(a.data, header=a.header)
    W = bootstrap_prune(X, IcaConfig(m=a.m, seed=a.seed), BootstrapConfig(a.nboot, a.confidence))
    pio.write_matrix_csv(W.W, a.out)
    if a.out not in (None, "-"):
        pio.write_json({"n_boot": a.nboot, "n_used": W.meta["n_used"], "confidence": a.confidence,
                        "kept_mask": W.meta["kept_mask"]}, a.out + ".json")


def cmd_check(a):
    model = pio.read_model(a.model)
    try:
        report = verify_model(model, a.variant, a.marriage, a.eps).to_dict()
    except AssumptionViolationError as exc:
        report = exc.partial.to_dict()
        report["aborted"]["message"] = str(exc)
    if a.distinct_source:
        ok, witness = check_distinct_source_condition(model, a.eps)
        report["distinct_source"] = {"ok": ok, "witness": witness}
    pio.write_json(report, a.out)


def _mixing_input(a):
    """Mixing matrix plus (if known) the true model."""
    if a.mixing is not None:
        W, header = pio.read_matrix_csv(a.mixing, header=a.header)
        truth = pio.read_model(a.model) if a.model is not None else None
        return W, truth, header
    if a.mode == "oracle":
        model = pio.read_model(a.model if a.model is not None else "-")
        return oracle_mixing(model, a.seed).W, model, None
    if a.data is None:
        raise UsageError("recover needs --mixing, --data (ica) or a model (oracle)")
    X, _ = pio.read_matrix_csv(a.data, header=a.header)
    truth = pio.read_model(a.model) if a.model is not None else None
    m = a.m if a.m is not None else (truth.m if truth is not None else None)
    W = bootstrap_prune(X, IcaConfig(m=m, seed=a.seed), BootstrapConfig(a.nboot, a.confidence))
    return W.W, truth, None


def cmd_recover(a):
    W, truth, header = _mixing_input(a)
    tol = a.ls_tol if a.ls_tol is not None else (1e-6 if a.mode == "oracle" else np.inf)
    res = recover(W, RecoveryConfig(eps=a.eps, ls_residual_tol=tol, prune_threshold=a.prune))
    out = res.to_dict()
    if truth is not None:
        out["metrics"] = _metrics(truth, res, W, a)
    pio.write_json(out, a.out)
    if a.dot:
        names = _names(a.names, W.shape[0], "") or header
        with open(a.dot, "w") as fh:
            fh.write(pio.to_dot(res.A_pruned, res.B_hat if a.dot_sources else None, names=names))


def _metrics(truth, res, W, a):
    _, rb = match_B(truth.B, res.B_hat, a.prune)
    W_true = mixing_matrix(truth, a.eps).W
    return {
        "A": compare_adjacency(truth.A, res.A_pruned, a.prune).to_dict(),
        "B": rb.to_dict(),
        "ica_success": ica_success(W_true, W, a.eps) if W_true.shape == np.shape(W) else False,
    }


def cmd_evaluate(a):
    truth = pio.read_model(a.model)
    with pio._open(a.result) as fh:
        try:
            r = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, a.result, exc.lineno, exc.colno) from None
    try:
        A_hat = np.array(r["A_hat"], dtype=float)
        B_hat = np.array(r["B_hat"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"result file lacks a usable A_hat/B_hat: {exc}", a.result) from None
    _, rb = match_B(truth.B, B_hat, a.prune)
    out = {"A": compare_adjacency(truth.A, A_hat, a.prune).to_dict(), "B": rb.to_dict()}
    if a.mixing is not None:
        W, _ = pio.read_matrix_csv(a.mixing, header=a.header)
        out["ica_success"] = ica_success(mixing_matrix(truth, a.eps).W, W, a.eps)
    pio.write_json(out, a.out)


def cmd_export_dot(a):
    if (a.model is None) == (a.result is None):
        raise UsageError("give exactly one of --model or --result")
    if a.model is not None:
        model = pio.read_model(a.model)
        A, B = model.A, model.B
    else:
        with pio._open(a.result) as fh:
            r = json.load(fh)
        A, B = np.array(r["A_hat"], dtype=float), np.array(r["B_hat"], dtype=float)
    if a.no_sources:
        B = None
    text = pio.to_dot(A, B, names=_names(a.names, A.shape[0], ""), weights=not a.no_weights)
    with pio._open(a.out, "w") as fh:
        fh.write(text)


def cmd_experiment(a):
    spec = ExperimentSpec(
        kind=a.kind, grid=parse_grid(a.grid), trials=a.trials, mode=a.mode, setting=a.setting,
        seed=a.seed if a.seed is not None else 0, n=a.n, variant=a.variant, marriage=a.marriage,
        eps=a.eps, prune=a.prune, n_boot=a.nboot, confidence=a.confidence,
        attempt_cap=a.attempt_cap, workers=a.workers,
    )
    rows = run_experiment(spec)
    write_rows_csv(rows, a.out + ".csv")
    summary = aggregate(rows, spec.kind)
    summary["spec"] = spec_dict(spec)
    pio.write_json(summary, a.out + ".json")


# -- parser -------------------------------------------------------------------------


def _common(p, *flags):
    if "eps" in flags:
        p.add_argument("--eps", type=float, default=DEFAULT_EPS, help="support threshold (default 1e-9)")
    if "prune" in flags:
        p.add_argument("--prune", type=float, default=0.1, help="edge magnitude cutoff (default 0.1)")
    if "seed" in flags:
        p.add_argument("--seed", type=int, default=None)
    if "out" in flags:
        p.add_argument("--out", default="-", help="output path ('-' = stdout)")
    if "header" in flags:
        p.add_argument("--header", action="store_true", help="input CSV starts with a header row")
    if "boot" in flags:
        p.add_argument("--nboot", type=int, default=50)
        p.add_argument("--confidence", type=float, default=0.95)
    if "check" in flags:
        p.add_argument("--variant", choices=("count", "full"), default="full")
        p.add_argument("--marriage", choices=("hall", "rank", "both"), default="hall")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pscm", description="Linear propagation SCM toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="draw a random model (JSON)")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--m", type=int)
    p.add_argument("--r", type=float)
    p.add_argument("--de", type=float, default=1.5)
    p.add_argument("--do", type=float, default=1.5)
    p.add_argument("--distinct", action="store_true", help="give every variable a private source")
    p.add_argument("--satisfying", action="store_true", help="redraw until both conditions hold")
    p.add_argument("--variant", choices=("count", "full"), default="full")
    p.add_argument("--attempt-cap", type=int, default=10**6)
    _common(p, "seed", "out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("simulate", help="sample observations (CSV, one row per variable)")
    p.add_argument("--model", default="-")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--dist", choices=("uniform", "laplace", "gaussian"), default="uniform")
    _common(p, "seed", "out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("separate", help="estimate the mixing matrix (CSV)")
    p.add_argument("--data")
    p.add_argument("--model")
    p.add_argument("--m", type=int)
    p.add_argument("--mode", choices=("oracle", "ica"), default="ica")
    _common(p, "seed", "out", "header", "boot")
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("check", help="verify the identifiability conditions")
    p.add_argument("--model", default="-")
    p.add_argument("--distinct-source", action="store_true", help="also run the private-source path check")
    _common(p, "eps", "out", "check")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("recover", help="recover A and B from a mixing matrix")
    p.add_argument("--mixing")
    p.add_argument("--data")
    p.add_argument("--model")
    p.add_argument("--m", type=int)
    p.add_argument("--mode", choices=("oracle", "ica"), default="oracle")
    p.add_argument("--ls-tol", type=float, default=None,
                   help="max relative least-squares residual (default 1e-6 oracle, inf ica)")
    p.add_argument("--dot", help="also write the recovered graph as DOT")
    p.add_argument("--dot-sources", action="store_true", help="include sources in --dot output")
    p.add_argument("--names", help="comma-separated variable names")
    _common(p, "eps", "prune", "seed", "out", "header", "boot")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("evaluate", help="compare a recovery result with the true model")
    p.add_argument("--model", required=True)
    p.add_argument("--result", required=True)
    p.add_argument("--mixing")
    _common(p, "eps", "prune", "out", "header")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-dot", help="render a model or result as Graphviz DOT")
    p.add_argument("--model")
    p.add_argument("--result")
    p.add_argument("--names")
    p.add_argument("--no-sources", action="store_true")
    p.add_argument("--no-weights", action="store_true")
    _common(p, "out")
    p.set_defaults(func=cmd_export_dot)

    p = sub.add_parser("experiment", help="Monte-Carlo experiments")
    p.add_argument("kind", choices=("satisfiability", "recovery"))
    p.add_argument("--grid", required=True, help='e.g. "p=10;r=1.0:2.6:0.2;de=2;do=1.5"')
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--setting", choices=sorted(SETTINGS), default="P-SCM_Equal")
    p.add_argument("--mode", choices=("oracle", "ica"), default="oracle")
    p.add_argument("--n", type=int, default=1000, help="samples per trial (ica mode)")
    p.add_argument("--attempt-cap", type=int, default=10**6)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="output prefix; writes PREFIX.csv and PREFIX.json")
    _common(p, "eps", "prune", "seed", "boot", "check")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("PSCM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"pscm: error: {exc}\n")
        return 1
    except (PscmError, OSError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("path", "line", "column", "k", "edge"):
            val = getattr(exc, attr, None)
            if val is not None:
                err[attr] = val if not isinstance(val, tuple) else list(val)
        sys.stderr.write(json.dumps(err) + "\n")
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
