"""The ten acceptance criteria, each at its stated tolerance and time budget.

Every test prints one ``CRITERION n: PASS|FAIL`` line (also repeated in the
terminal summary by ``conftest.py``).  Sub-millisecond budgets are compared
against the best of five timed repetitions, so one-off interpreter jitter
does not decide the verdict.
"""

import itertools
import time

import numpy as np
from scipy.spatial.distance import cdist

import golden
from conftest import ACCEPTANCE_LINES
from pscm._linalg import normalize_columns
from pscm.evaluation import compare_adjacency, match_B, shd_identity_holds
from pscm.experiments import ExperimentSpec, generation_config, parse_grid, run_experiment, sample_model
from pscm.identifiability import (
    check_distinct_source_condition,
    check_marriage_condition,
    marriage_exhaustive,
    possible_parents,
    unique_component_layers,
    verify_model,
)
from pscm.model import GenerationConfig, MixingMatrix, generate_random_model, mixing_matrix, scramble
from pscm.recovery import RecoveryConfig, recover


def report(n, ok, detail, elapsed, budget):
    in_time = elapsed < budget
    verdict = "PASS" if ok and in_time else "FAIL"
    line = f"CRITERION {n}: {verdict} ({detail}; {elapsed:.4g} s, budget {budget:g} s)"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line
    assert in_time, line


def best_of(fn, repeat=5):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


def test_criterion_1_peeling_layers():
    res, t = best_of(lambda: unique_component_layers(golden.PEELING_MIXTURES.items(), target=7))
    layers = [dict(layer) for layer in res.layers]
    ok = layers == [{1: {1}, 2: {2}}, {3: {4}, 4: {5}}] and res.residual == {5, 6}
    report(1, ok, f"layers={layers}, residual={sorted(res.residual)}", t, 1e-3)


def test_criterion_2_possible_parents():
    W = MixingMatrix(golden.POSSIBLE_PARENT_W)
    pp, t = best_of(lambda: possible_parents(W, 2))
    report(2, pp.members == (0,), f"P_3 = {[f'x{i + 1}' for i in pp]}", t, 1e-3)


def test_criterion_3_golden_negatives():
    def run():
        out = {}
        for which in (1, 2):
            rep = verify_model(golden.unique_component_violation(which))
            out[f"ex3_{which}"] = [(v.k, v.unique_ok, v.witness) for v in rep.failures()]
        rep = verify_model(golden.marriage_violation())
        out["ex4"] = [(v.k, v.marriage_ok, v.witness) for v in rep.failures()]
        out["ds"] = check_distinct_source_condition(golden.latent_confounder_model())
        return out

    out, t = best_of(run)
    w31, w32 = out["ex3_1"], out["ex3_2"]
    ok3 = (len(w31) == 1 and w31[0][0] == 2 and not w31[0][1]
           and (w31[0][2]["source"], w31[0][2]["parent"]) == (1, 0)
           and len(w32) == 1 and (w32[0][2]["source"], w32[0][2]["parent"]) == (2, 1))
    ex4 = out["ex4"]
    ok4 = (len(ex4) == 1 and ex4[0][0] == 5 and not ex4[0][1]
           and len(ex4[0][2]["subset"]) == 5 and len(ex4[0][2]["sources"]) == 4)
    ds_ok, ds_w = out["ds"]
    ok_ds = not ds_ok and (ds_w["source"], ds_w["variable"]) == (3, 2)
    detail = f"ex3 witnesses (s2,x1)/(s3,x2): {ok3}; ex4 5-set over 4: {ok4}; (s_L, x3): {ok_ds}"
    report(3, ok3 and ok4 and ok_ds, detail, t, 10e-3)


def test_criterion_4_stock_indices():
    res, t = best_of(lambda: recover(golden.STOCK_W, RecoveryConfig(prune_threshold=0.1)))
    names = golden.STOCK_NAMES
    edges = set(res.edges())
    ok = edges == golden.STOCK_EDGES and res.order_used[0] == names.index("DJI")
    shown = sorted(f"{names[a]}->{names[b]}" for a, b in edges)
    report(4, ok, f"{len(edges)} edges {shown}, first={names[res.order_used[0]]}", t, 10e-3)


def test_criterion_5_round_trip():
    t0 = time.perf_counter()
    per_setting = 70
    worst_A = worst_B = 0.0
    count = bad = 0
    for s_idx, setting in enumerate(("P-SCM_Equal", "P-SCM_Fewer", "DS-P-SCM")):
        rng = np.random.default_rng([5, s_idx])
        for i in range(per_setting):
            p = 5 + i % 6
            model, _, _ = sample_model(generation_config({"p": p}, setting), rng)
            assert model is not None
            res = recover(scramble(mixing_matrix(model), int(rng.integers(2**31))))
            dA = float(np.linalg.norm(res.A_hat - model.A, np.inf))
            _, rb = match_B(model.B, res.B_hat)
            worst_A, worst_B = max(worst_A, dA), max(worst_B, rb.frobenius)
            bad += not (dA < 1e-8 and rb.frobenius < 1e-8)
            count += 1
    t = time.perf_counter() - t0
    detail = f"{count - bad}/{count} exact, max |A|_inf err {worst_A:.2e}, max B Frobenius {worst_B:.2e}"
    report(5, count >= 200 and bad == 0, detail, t, 60.0)


def test_criterion_6_marriage_cross_validation():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    n_inst, disagree, n_true = 600, 0, 0
    for i in range(n_inst):
        rows = 1 + i % 12
        cols = int(rng.integers(1, 13))
        q = rng.uniform(0.1, 0.7)
        sup = rng.random((rows, cols)) < q
        B = sup * rng.uniform(0.5, 1.0, sup.shape) * rng.choice([-1.0, 1.0], sup.shape)
        hall = check_marriage_condition(B, "hall")[0]
        rank = check_marriage_condition(B, "rank")[0]
        brute = marriage_exhaustive(sup)[0]
        disagree += not (hall == rank == brute)
        n_true += brute
    t = time.perf_counter() - t0
    report(6, disagree == 0, f"{n_inst - disagree}/{n_inst} agree ({n_true} satisfy Hall)", t, 30.0)


def test_criterion_7_distinct_source_reduction():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    n_models, disagree, n_ok = 240, 0, 0
    for i in range(n_models):
        p = 5 + i % 6
        cfg = GenerationConfig(p=p, m=p + 1 + i % 4, d_e=2.0, d_o=1.5, distinct_source=True)
        model = generate_random_model(cfg, rng=rng)
        full = verify_model(model, "full").overall
        ds = check_distinct_source_condition(model)[0]
        disagree += full != ds
        n_ok += full
    identity_attempts = []
    for i in range(60):
        cfg = generation_config({"p": 5 + i % 6, "r": 1.0}, "DS-P-SCM")
        model, attempts, _ = sample_model(cfg, rng)
        identity_attempts.append(attempts if model is not None else None)
    t = time.perf_counter() - t0
    all_one = all(a == 1 for a in identity_attempts)
    detail = (f"{n_models - disagree}/{n_models} agree ({n_ok} satisfying); "
              f"r=1: {sum(a == 1 for a in identity_attempts)}/60 satisfied on the first attempt")
    report(7, disagree == 0 and all_one, detail, t, 60.0)


def test_criterion_8_satisfiability_trend():
    t0 = time.perf_counter()
    spec = ExperimentSpec("satisfiability", parse_grid("p=10;r=1.0,2.4;de=2;do=1.5"), trials=30, seed=0)
    rows = run_experiment(spec)
    mean = {r: np.mean([row["attempts"] for row in rows if abs(row["r"] - r) < 1e-9]) for r in (1.0, 2.4)}
    censored = sum(bool(row["censored"]) for row in rows)
    t = time.perf_counter() - t0
    detail = f"mean attempts r=1.0: {mean[1.0]:.1f}, r=2.4: {mean[2.4]:.1f}, censored {censored}"
    report(8, mean[2.4] < mean[1.0] and censored == 0, detail, t, 600.0)


def test_criterion_9_ica_pipeline():
    t0 = time.perf_counter()
    spec = ExperimentSpec("recovery", parse_grid("p=5"), trials=50, mode="ica", setting="P-SCM_Equal",
                          n=5000, seed=0)
    rows = run_experiment(spec)
    success = [r for r in rows if r["ica_success"]]
    rate = len(success) / len(rows)
    # SHD/Edge = 0 is read as SHD = 0, which also covers graphs without edges
    exact = sum(r["A_shd"] == 0 for r in success)
    frac = exact / len(success) if success else 0.0
    errors = sum(r["error"] is not None for r in rows)
    t = time.perf_counter() - t0
    detail = (f"ica_success {len(success)}/50 = {rate:.2f}; SHD=0 in {exact}/{len(success)} = {frac:.2f} "
              f"of successes; {errors} trials raised")
    report(9, rate > 0.5 and frac >= 0.9, detail, t, 900.0)


def brute_force_frobenius_sq(Bt, Bh):
    m = Bt.shape[1]
    cost = cdist(Bt.T, Bh.T, "sqeuclidean")
    perms = np.array(list(itertools.permutations(range(m))))
    return cost[np.arange(m), perms].sum(axis=1).min()


def test_criterion_10_evaluation_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    identity_ok = 0
    for _ in range(100):
        p = int(rng.integers(2, 12))
        A1 = np.tril(rng.uniform(0.2, 1.0, (p, p)) * (rng.random((p, p)) < rng.uniform(0, 0.8)), k=-1)
        A2 = np.tril(rng.uniform(0.0, 1.0, (p, p)) * (rng.random((p, p)) < rng.uniform(0, 0.8)), k=-1)
        perm = rng.permutation(p)
        identity_ok += shd_identity_holds(compare_adjacency(A1, A2[np.ix_(perm, perm)]))
    match_ok = n_match = 0
    for m in range(1, 9):
        for _ in range(5):
            p = int(rng.integers(m, m + 4))
            Bt = rng.uniform(-1, 1, (p, m)) * (rng.random((p, m)) < 0.6)
            Bt[0] += (~Bt.any(axis=0)) * 1.0
            Bh = Bt[:, rng.permutation(m)] * rng.uniform(0.5, 2, m) + rng.normal(0, 0.3, (p, m))
            _, rep = match_B(Bt, Bh)
            ref = brute_force_frobenius_sq(normalize_columns(Bt), normalize_columns(Bh))
            match_ok += abs(rep.frobenius ** 2 - ref) <= 1e-9 * max(1.0, ref)
            n_match += 1
    t = time.perf_counter() - t0
    detail = f"identity {identity_ok}/100; Hungarian == brute force {match_ok}/{n_match} (m <= 8)"
    report(10, identity_ok == 100 and match_ok == n_match, detail, t, 10.0)
