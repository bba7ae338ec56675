import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import golden
from pscm.errors import ConfigError, MalformedModelError
from pscm.model import (
    GenerationConfig,
    MixingMatrix,
    Pscm,
    all_square_submatrices,
    check_assumptions,
    generate_random_model,
    mixing_matrix,
    scramble,
    simulate,
    support_from_graph,
    topological_order,
)


def neumann_mixing(A, B):
    # A is nilpotent, so (I - A)^-1 = I + A + A^2 + ... + A^(p-1)
    p = A.shape[0]
    acc, term = np.eye(p), np.eye(p)
    for _ in range(p - 1):
        term = term @ A
        acc = acc + term
    return acc @ B


@st.composite
def dag_models(draw, max_p=7, max_m=7):
    p = draw(st.integers(2, max_p))
    m = draw(st.integers(1, max_m))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    A = np.tril(rng.uniform(-1, 1, (p, p)) * (rng.random((p, p)) < 0.5), k=-1)
    B = rng.uniform(-1, 1, (p, m)) * (rng.random((p, m)) < 0.6)
    B[rng.integers(0, p, m), np.arange(m)] = 1.0  # no empty source column
    B[np.arange(p), rng.integers(0, m, p)] = 1.0  # no empty row
    perm = rng.permutation(p)
    Ap = np.zeros_like(A)
    Ap[np.ix_(perm, perm)] = A
    Bp = np.zeros_like(B)
    Bp[perm] = B
    return Pscm(Ap, Bp, None)


def test_three_var_mixing_matrix_by_hand():
    W = mixing_matrix(golden.three_var_model()).W
    np.testing.assert_allclose(W, golden.THREE_VAR_W, atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(dag_models())
def test_mixing_matrix_matches_power_series(model):
    W = mixing_matrix(model).W
    np.testing.assert_allclose(W, neumann_mixing(model.A, model.B), atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(dag_models())
def test_topological_order_respects_edges(model):
    pos = {v: t for t, v in enumerate(model.order)}
    for cause, effect in model.edges():
        assert pos[cause] < pos[effect]


@settings(max_examples=40, deadline=None)
@given(dag_models())
def test_ancestors_match_reachability(model):
    # reachability by repeated boolean squaring, independent of the order-based closure
    R = (model.A != 0).astype(int)
    reach = R.copy()
    for _ in range(model.p):
        reach = ((reach + reach @ R) > 0).astype(int)
    np.testing.assert_array_equal(model.ancestors(), reach.astype(bool))


def test_pscm_rejects_cycle():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(MalformedModelError):
        Pscm(A, np.eye(2), None)


def test_pscm_rejects_bad_order_and_shapes():
    A = np.zeros((2, 2))
    A[1, 0] = 1.0
    with pytest.raises(MalformedModelError):
        Pscm(A, np.eye(2), (1, 0))
    with pytest.raises(MalformedModelError):
        Pscm(A, np.eye(2), (0, 0))
    with pytest.raises(MalformedModelError):
        Pscm(np.zeros((3, 3)), np.eye(2), None)
    with pytest.raises(MalformedModelError):
        Pscm(A, np.array([[1.0, 0.0], [1.0, 0.0]]), None)
    with pytest.raises(MalformedModelError):
        Pscm(A, np.array([[np.nan, 1.0], [1.0, 0.0]]), None)


def test_pscm_arrays_are_read_only():
    model = golden.three_var_model()
    with pytest.raises(ValueError):
        model.A[0, 0] = 1.0


def test_topological_order_smallest_index_first():
    A = np.zeros((4, 4))
    A[0, 3] = 1.0
    A[1, 2] = 1.0
    assert topological_order(A) == (2, 1, 3, 0)


def test_mixing_matrix_rejects_empty_row():
    with pytest.raises(MalformedModelError):
        MixingMatrix(np.array([[1.0, 0.0], [0.0, 0.0]]))


def test_all_square_submatrices_count():
    from math import comb

    assert sum(1 for _ in all_square_submatrices((5, 4), 3)) == comb(5, 3) * comb(4, 3)


# -- generator --------------------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 9), st.sampled_from([0.8, 1.0, 1.5]), st.integers(0, 10**6))
def test_generated_models_are_valid(p, r, seed):
    cfg = GenerationConfig(p=p, r=r, seed=seed)
    model = generate_random_model(cfg)
    assert model.p == p and model.m == cfg.n_sources()
    rep = check_assumptions(model, spot_checks=50, seed=seed)
    assert rep.ok, rep
    # generic coefficients: W has exactly the graph-implied support
    np.testing.assert_array_equal(mixing_matrix(model).support, support_from_graph(model))
    lo, hi = cfg.coeff_interval
    nz = np.concatenate([model.A[model.A != 0], model.B[model.B != 0]])
    assert np.all((np.abs(nz) >= lo) & (np.abs(nz) <= hi))


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 8), st.integers(0, 4), st.integers(0, 10**6))
def test_distinct_source_models_own_private_sources(p, extra, seed):
    model = generate_random_model(GenerationConfig(p=p, m=p + extra, distinct_source=True, seed=seed))
    sup = model.B != 0
    private = sup[:, sup.sum(axis=0) == 1]
    assert private.any(axis=1).all()


def test_generator_reproducible():
    cfg = GenerationConfig(p=7, r=1.2, seed=42)
    a, b = generate_random_model(cfg), generate_random_model(cfg)
    np.testing.assert_array_equal(a.A, b.A)
    np.testing.assert_array_equal(a.B, b.B)
    assert a.order == b.order
    assert a.meta["attempts"] == 1 and a.meta["seed"] == 42


def test_generator_accept_counts_attempts():
    seen = []

    def accept(st):
        seen.append(st)
        return len(seen) >= 4

    model = generate_random_model(GenerationConfig(p=5, seed=3), accept=accept)
    assert model.meta["attempts"] == 4


def test_generator_max_attempts_returns_none():
    assert generate_random_model(GenerationConfig(p=5, seed=3), accept=lambda st: False, max_attempts=5) is None


def test_generator_config_errors():
    with pytest.raises(ConfigError):
        generate_random_model(GenerationConfig(p=1))
    with pytest.raises(ConfigError):
        generate_random_model(GenerationConfig(p=5, m=3, distinct_source=True))
    with pytest.raises(ConfigError):
        generate_random_model(GenerationConfig(p=5, coeff_interval=(0.0, 1.0)))
    with pytest.raises(ConfigError):
        generate_random_model(GenerationConfig(p=5, d_o=0.0))


def test_ds_identity_sources():
    # with no shared sources, B is a permuted diagonal
    model = generate_random_model(GenerationConfig(p=6, r=1.0, distinct_source=True, seed=1))
    sup = model.B != 0
    assert np.all(sup.sum(axis=0) == 1) and np.all(sup.sum(axis=1) == 1)


# -- data --------------------------------------------------------------------------


def test_simulate_covariance_matches_analytic():
    model = golden.three_var_model()
    data = simulate(model, 200_000, seed=0)
    W = golden.THREE_VAR_W
    expected = W @ W.T / 12.0  # Var of U(-0.5, 0.5) is 1/12
    np.testing.assert_allclose(np.cov(data.X), expected, rtol=0.02, atol=0.01)


def test_simulate_distributions_and_errors():
    model = golden.three_var_model()
    for dist in ("uniform", "laplace", "gaussian"):
        d = simulate(model, 50, dist=dist, seed=1)
        assert d.X.shape == (3, 50) and d.source_dist == dist
    custom = simulate(model, 10, dist=lambda rng, shape: np.ones(shape), seed=0)
    np.testing.assert_allclose(custom.X[:, 0], golden.THREE_VAR_W.sum(axis=1))
    with pytest.raises(ConfigError):
        simulate(model, 10, dist="cauchy")
    with pytest.raises(ConfigError):
        simulate(model, 0)


def test_simulate_reproducible():
    model = golden.three_var_model()
    np.testing.assert_array_equal(simulate(model, 20, seed=5).X, simulate(model, 20, seed=5).X)


@settings(max_examples=40, deadline=None)
@given(dag_models(), st.integers(0, 10**6))
def test_scramble_is_permutation_times_scaling(model, seed):
    W = mixing_matrix(model)
    out, perm, gamma = scramble(W, seed, return_transform=True)
    np.testing.assert_allclose(out.W, W.W[:, perm] * gamma)
    assert sorted(perm) == list(range(model.m))
    assert np.all((np.abs(gamma) >= 0.5) & (np.abs(gamma) <= 2.0))


# -- assumptions ----------------------------------------------------------------------


def test_assumption2_witness():
    # x2's sources are exactly x1's, so the edge x1 -> x2 adds nothing new
    A = np.array([[0.0, 0.0], [1.0, 0.0]])
    B = np.array([[1.0], [0.0]])
    rep = check_assumptions(Pscm(A, B, None))
    assert not rep.assumption2_ok and rep.assumption2_witness == (0, 1)


def test_faithfulness_a_violated_by_cancellation():
    # x3 = x1 + x2 where x2 = -x1 + s2: s1 cancels out of x3
    A = np.zeros((3, 3))
    A[1, 0] = -1.0
    A[2, 0], A[2, 1] = 1.0, 1.0
    B = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    rep = check_assumptions(Pscm(A, B, None))
    assert not rep.faithfulness_a_ok


def test_faithfulness_b_detects_singular_block():
    B = np.array([[1.0, 2.0], [2.0, 4.0]])
    rep = check_assumptions(Pscm(np.zeros((2, 2)), B, None), spot_checks=200)
    assert not rep.faithfulness_b_ok
    rows, cols = rep.faithfulness_b_witness
    assert len(rows) == len(cols) == 2
