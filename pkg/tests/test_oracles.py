import numpy as np
import pytest

from _reference import (
    builtin_oracle_cases,
    mc_check,
    ref_central_moment,
    ref_cvar_constraint,
    ref_expected_return,
    ref_mean_dev_constraint,
)
from cosco import (
    QueryCounter,
    ScenarioTable,
    load_table,
    make_cvar_problem,
    make_kkt_problem_cc,
    make_kkt_problem_ec,
    make_mean_deviation_problem,
    make_moment_portfolio_problem,
)
from cosco.problems import make_problem, softplus, softplus_grad

M = 100_000


@pytest.fixture(scope="module")
def table():
    return load_table("portfolio_4x3")


# -- kkt-ec ------------------------------------------------------------------


def test_p1_sample_support():
    oracle = make_kkt_problem_ec(seed=1).oracle
    for _ in range(20):
        v, g = oracle.sample_f2(np.array([0.0]))
        assert v.shape == (1,) and g.shape == (1, 1)
        assert v[0] in (-1.0, 1.0) and g[0, 0] == 1.0
        v, g = oracle.sample_g(np.array([0.0]))
        assert v[0] in (-1.0, 1.0) and g[0, 0] == 1.0


def test_p1_deterministic_variant():
    oracle = make_kkt_problem_ec(noise=0.0, seed=1).oracle
    x = np.array([3.7])
    assert oracle.sample_f2(x).value.tolist() == [3.7]
    assert oracle.sample_g(x).value.tolist() == [3.7]


@pytest.mark.parametrize("y, grad", [(1.0, 0.0), (2.0, 2.0)])
def test_p1_f1_gradient(y, grad):
    oracle = make_kkt_problem_ec(seed=2).oracle
    assert oracle.mean("f1", np.array([y])).grad.tolist() == [grad]
    draws = oracle.sample_f1_batch(np.array([y]), 1000)
    assert np.all(draws.grad == grad)


def test_p1_monte_carlo_means():
    oracle = make_kkt_problem_ec(seed=3).oracle
    # 3-sigma bands: sd = 1 for f2 and g, gradient of f1 is noiseless
    assert abs(oracle.sample_f2_batch(np.array([0.0]), M).value.mean()) <= 0.01
    assert abs(oracle.sample_f1_batch(np.array([0.0]), M).grad.mean() + 2.0) <= 0.01
    assert abs(oracle.sample_g_batch(np.array([0.5]), M).value.mean() - 0.5) <= 0.01


def test_p1_ground_truth():
    p = make_kkt_problem_ec()
    assert p.oracle.exact_objective(np.array([0.0])) == 1.0
    assert p.oracle.exact_constraint(np.array([0.0])).tolist() == [0.0]
    # grid search over X = [-10, 10] at step 1e-4 for min (x-1)^2 s.t. x <= 0
    grid = np.linspace(-10, 10, 200_001)
    feasible = grid[grid <= 0]
    x_star = feasible[np.argmin((feasible - 1) ** 2)]
    assert abs(x_star - p.x_star[0]) <= 1e-4 and p.f_star == 1.0
    # stationarity 2(x* - 1) + lambda* = 0
    assert 2 * (p.x_star[0] - 1) + p.lambda_star[0] == 0.0


# -- kkt-cc ------------------------------------------------------------------


def test_p2_examples():
    p = make_kkt_problem_cc(seed=4)
    o = p.oracle
    v, g = o.sample_g2(np.array([1.0]))
    assert v[0] in (0.0, 2.0) and g.shape == (1, 1) and g[0, 0] == 1.0
    det = make_kkt_problem_cc(noise=0.0).oracle
    assert det.sample_g2(np.array([-2.5])).value.tolist() == [-2.5]
    assert abs(o.sample_g2_batch(np.array([1.0]), M).value.mean() - 1.0) <= 0.01
    v, g = o.sample_g1(np.array([1.0]))
    assert v.tolist() == [0.0] and g.tolist() == [[2.0]]
    v, g = o.sample_g1(np.array([0.0]))
    assert v.tolist() == [-1.0] and g.tolist() == [[0.0]]
    noisy = make_kkt_problem_cc(g1_noise=1.0, seed=5).oracle
    assert abs(noisy.sample_g1_batch(np.array([2.0]), M).value.mean() - 3.0) <= 0.01
    assert o.exact_constraint(np.array([1.0])).tolist() == [0.0]
    assert o.exact_objective(np.array([2.0])) == 0.0


def test_p2_ground_truth():
    p = make_kkt_problem_cc()
    grid = np.linspace(-10, 10, 200_001)
    feasible = grid[grid ** 2 - 1 <= 0]
    x_star = feasible[np.argmin((feasible - 2) ** 2)]
    assert abs(x_star - p.x_star[0]) <= 1e-4
    x, lam = p.x_star[0], p.lambda_star[0]
    assert 2 * (x - 2) + 2 * lam * x == 0.0
    assert p.f_star == (x - 2) ** 2


# -- applications --------------------------------------------------------------


def test_cvar_single_scenario():
    r = np.array([0.5, -1.0])
    table = ScenarioTable([r])
    o = make_cvar_problem(table, alpha=0.8, gamma=0.0).oracle
    for v in ([0.3, 0.7, 0.1], [1.0, 0.0, -2.0], [0.0, 1.0, 1.5]):
        v = np.array(v)
        loss = -(r @ v[:2])
        expected = v[2] + max(loss - v[2], 0.0) / 0.2
        assert o.exact_constraint(v)[0] == pytest.approx(expected, rel=1e-14)
        assert o.sample_g(v).value[0] == pytest.approx(expected, rel=1e-14)


def test_cvar_zero_loss_boundary():
    o = make_cvar_problem(ScenarioTable([[0.0, 0.0]]), alpha=0.5, gamma=0.0).oracle
    assert o.exact_constraint(np.array([0.5, 0.5, 0.0])).tolist() == [0.0]


def test_cvar_equal_weights_finite_sum(table):
    p = make_cvar_problem(table, 0.9, 0.1)
    for u in (-1.0, -0.2, 0.4):
        v = np.array([1 / 3, 1 / 3, 1 / 3, u])
        assert p.oracle.exact_constraint(v)[0] == pytest.approx(
            ref_cvar_constraint(table, v, 0.9, 0.1), rel=1e-12, abs=1e-14)
    fs = p.feasible_set
    assert fs.dim == 4 and fs.contains(fs.center())


def test_cvar_rejects_bad_alpha(table):
    for a in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            make_cvar_problem(table, a, 0.0)


def test_softplus_examples():
    assert abs(softplus(1.0, 1e-6) - 1.0) <= 1e-6
    assert softplus(0.0, 0.3) == pytest.approx(0.3 * np.log(2), rel=1e-15)
    assert np.isfinite(softplus(1e6, 1e-3)) and softplus(-1e6, 1e-3) == 0.0


def test_softplus_convex_nondecreasing_and_close():
    rng = np.random.default_rng(6)
    for mu in (1e-3, 0.1, 2.0):
        u = np.sort(rng.uniform(-5, 5, 100))
        h = 1e-4 * max(mu, 1e-2)
        s = softplus(u, mu)
        d1 = (softplus(u + h, mu) - softplus(u - h, mu)) / (2 * h)
        d2 = softplus(u + h, mu) - 2 * s + softplus(u - h, mu)
        assert np.all(d1 >= -1e-12) and np.all(d2 >= -1e-12)
        assert np.all(np.diff(s) >= 0)
        gap = s - np.maximum(u, 0)
        assert np.all(gap >= 0) and np.all(gap <= mu * np.log(2) + 1e-15)
        np.testing.assert_allclose(softplus_grad(u, mu), d1, rtol=1e-5, atol=1e-7)


def test_mean_dev_smoothing_gap(table):
    rng = np.random.default_rng(7)
    for mu in (1e-3, 0.05):
        p = make_mean_deviation_problem(table, [0.2], mu)
        for _ in range(10):
            x = rng.dirichlet(np.ones(3))
            smooth = p.oracle.exact_constraint(x)
            rough = ref_mean_dev_constraint(table, [0.2], mu, x, smoothed=False)
            np.testing.assert_allclose(p.oracle.unsmoothed_constraint(x), rough, atol=1e-14)
            np.testing.assert_allclose(
                smooth, ref_mean_dev_constraint(table, [0.2], mu, x), rtol=1e-12, atol=1e-14)
            diff = smooth - rough
            assert np.all(diff >= -1e-15) and np.all(diff <= mu * np.log(2) + 1e-15)


def test_mean_dev_rejects_bad_mu(table):
    with pytest.raises(ValueError):
        make_mean_deviation_problem(table, [0.2], 0.0)


def test_moment_single_scenario_is_zero():
    o = make_moment_portfolio_problem(ScenarioTable([[0.3, 1.2]]), 4, 1.0).oracle
    for x in ([0.5, 0.5], [1.0, 0.0]):
        assert o.central_moment(np.array(x)).tolist() == [0.0]
        assert o.exact_constraint(np.array(x)).tolist() == [-1.0]


def test_moment_two_point_variance():
    o = make_moment_portfolio_problem(ScenarioTable([-1.0, 1.0]), 2, 1.0).oracle
    assert o.central_moment(np.array([1.0])).tolist() == [1.0]
    assert o.exact_constraint(np.array([1.0])).tolist() == [0.0]


def test_moment_equal_weights_finite_sum(table):
    o = make_moment_portfolio_problem(table, 4, 0.5).oracle
    x = np.full(3, 1 / 3)
    expected = ref_central_moment(table, x, 4)
    assert o.central_moment(x)[0] == pytest.approx(expected, rel=1e-12)
    assert o.exact_constraint(x)[0] == pytest.approx(expected - 0.5, rel=1e-12)
    assert o.exact_objective(x) == pytest.approx(-ref_expected_return(table, x), rel=1e-12)


def test_moment_p2_matches_variance(table):
    rng = np.random.default_rng(8)
    o = make_moment_portfolio_problem(table, 2, 1.0).oracle
    for _ in range(10):
        x = rng.dirichlet(np.ones(3))
        ret = table.scenarios @ x
        var = np.average((ret - np.average(ret, weights=table.probs)) ** 2, weights=table.probs)
        assert abs(o.exact_constraint(x)[0] + 1.0 - var) <= 1e-10


@pytest.mark.parametrize("p, c", [(3, 1.0), (4, 0.0), (1, 1.0), ([2, 4], [1.0])])
def test_moment_rejects_bad_parameters(table, p, c):
    with pytest.raises(ValueError):
        make_moment_portfolio_problem(table, p, c)


# -- contract-level properties -------------------------------------------------


@pytest.mark.parametrize("case", builtin_oracle_cases(), ids=lambda c: c[0])
def test_exact_evaluators_match_reference(case):
    name, problem, levels = case
    o = problem.oracle
    rng = np.random.default_rng(9)
    for level, (point, expected) in levels.items():
        for _ in range(5):
            q = point(rng)
            v, g = expected(q)
            mv, mg = o.mean(level, q)
            np.testing.assert_allclose(mv, v, rtol=1e-12, atol=1e-13, err_msg=f"{name}/{level}")
            np.testing.assert_allclose(mg, g, rtol=1e-12, atol=1e-13, err_msg=f"{name}/{level}")


@pytest.mark.parametrize("case", builtin_oracle_cases(), ids=lambda c: c[0])
def test_single_and_batch_draws_agree(case):
    # single draws and batch draws share kernels; check shapes and support
    name, problem, levels = case
    o = problem.oracle
    dims = o.dims
    rng = np.random.default_rng(10)
    shapes = {"f2": ((dims.d_y,), (dims.d_x, dims.d_y)), "f1": ((), (dims.d_y,)),
              "g": ((dims.m,), (dims.d_x, dims.m)), "g2": ((dims.d_z,), (dims.d_x, dims.d_z)),
              "g1": ((dims.m,), (dims.d_z, dims.m))}
    for level, (point, _) in levels.items():
        q = point(rng)
        v, g = getattr(o, f"sample_{level}")(q)
        assert np.shape(v) == shapes[level][0] and g.shape == shapes[level][1]
        bv, bg = getattr(o, f"sample_{level}_batch")(q, 7)
        assert bv.shape == (7, *shapes[level][0]) and bg.shape == (7, *shapes[level][1])


@pytest.mark.parametrize("case", builtin_oracle_cases(), ids=lambda c: c[0])
def test_unbiased_small(case):
    name, problem, levels = case
    o = problem.oracle.clone(seed=12)
    rng = np.random.default_rng(13)
    for level, (point, expected) in levels.items():
        for _ in range(3):
            q = point(rng)
            v, g = expected(q)
            draws = getattr(o, f"sample_{level}_batch")(q, 20_000)
            assert mc_check(draws.value, v) <= 1.0, f"{name}/{level} value"
            assert mc_check(draws.grad, g) <= 1.0, f"{name}/{level} grad"


def test_successive_draws_uncorrelated():
    o = make_kkt_problem_ec(seed=14).oracle
    x = np.array([0.0])
    v = np.array([o.sample_f2(x).value[0] for _ in range(M)])
    v = v - v.mean()
    r1 = (v[:-1] @ v[1:]) / (v @ v)
    assert abs(r1) <= 4 / np.sqrt(M)
    # draws of different levels interleaved at one point are also uncorrelated
    a = np.array([o.sample_f2(x).value[0] for _ in range(20_000)])
    b = np.array([o.sample_g(x).value[0] for _ in range(20_000)])
    assert abs(np.corrcoef(a, b)[0, 1]) <= 4 / np.sqrt(20_000)


def test_seed_determinism_and_clones():
    a = make_kkt_problem_cc(seed=15).oracle
    b = make_kkt_problem_cc(seed=15).oracle
    x = np.array([0.3])
    seq_a = [a.sample_g2(x).value[0] for _ in range(3000)]
    seq_b = [b.sample_g2(x).value[0] for _ in range(3000)]
    assert seq_a == seq_b
    c = a.clone(seed=16)
    d = a.clone(seed=16)
    assert [c.sample_f2(x).value[0] for _ in range(100)] == \
           [d.sample_f2(x).value[0] for _ in range(100)]
    # clones do not advance the parent stream
    a.reseed(15)
    a.clone(seed=1).sample_f2(x)
    assert [a.sample_g2(x).value[0] for _ in range(3000)] == seq_a


def test_declared_constants_bound_second_moments():
    rng = np.random.default_rng(17)
    for p in (make_kkt_problem_ec(), make_kkt_problem_cc()):
        c = p.constants.declared()
        o = p.oracle
        for _ in range(10):
            x = rng.uniform(-10, 10, 1)
            var_f2, grad_f2 = o.second_moments("f2", x)
            assert var_f2 <= c["sigma_f2"] ** 2 and grad_f2 <= c["C_f2"] ** 2
            var_f1, _ = o.second_moments("f1", rng.uniform(-5, 5, 1))
            assert var_f1 <= c["sigma_f1"] ** 2
            if o.dims.d_z:
                var_g2, grad_g2 = o.second_moments("g2", x)
                assert var_g2 <= c["sigma_g2"] ** 2 and grad_g2 <= c["C_g2"] ** 2
            else:
                var_g, grad_g = o.second_moments("g", x)
                assert var_g <= c["sigma_g"] ** 2 and grad_g <= c["C_g"] ** 2
            # Monte Carlo estimate, with 3-sigma slack on the variance
            draws = o.sample_f2_batch(x, 20_000).value[:, 0]
            dev2 = (draws - x[0]) ** 2
            assert dev2.mean() <= c["sigma_f2"] ** 2 + 3 * dev2.std(ddof=1) / np.sqrt(20_000)
        assert p.feasible_set.diameter <= c["D_X"]


def test_query_counter():
    counted = QueryCounter(make_kkt_problem_ec(seed=0).oracle)
    x = np.array([0.0])
    counted.sample_f2(x)
    counted.sample_f2(x)
    counted.sample_g(x)
    assert counted.counts == {"sample_f2": 2, "sample_g": 1}
    assert counted.total == 3
    assert counted.dims.d_x == 1


# -- scenario tables -------------------------------------------------------------


def test_table_renormalizes_and_rejects():
    t = ScenarioTable([[1.0], [2.0]], [0.5 + 4e-10, 0.5])
    assert abs(t.probs.sum() - 1.0) <= 1e-12
    with pytest.raises(ValueError):
        ScenarioTable([[1.0], [2.0]], [0.6, 0.5])
    with pytest.raises(ValueError):
        ScenarioTable([[1.0], [2.0]], [1.5, -0.5])
    with pytest.raises(ValueError):
        ScenarioTable(np.zeros((0, 2)))


def test_table_sampling_frequencies():
    t = ScenarioTable([[0.0], [1.0], [2.0]], [0.2, 0.5, 0.3])
    rng = np.random.default_rng(18)
    counts = np.bincount(t.indices(rng.random(M)), minlength=3) / M
    np.testing.assert_allclose(counts, t.probs, atol=4 * np.sqrt(0.25 / M))
    assert [t.index(u) for u in (0.0, 0.19, 0.2, 0.69, 0.7, 0.999)] == [0, 0, 1, 1, 2, 2]


def test_table_csv_round_trip(tmp_path):
    t = ScenarioTable([[0.1, -2.0], [3.5, 1e-9]], [0.25, 0.75])
    path = tmp_path / "t.csv"
    t.write_csv(path, ["a", "b"])
    back = ScenarioTable.read_csv(path)
    np.testing.assert_array_equal(back.scenarios, t.scenarios)
    np.testing.assert_array_equal(back.probs, t.probs)


def test_table_csv_requires_header(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("0.5,1.0\n0.5,2.0\n")
    with pytest.raises(ValueError, match="header"):
        ScenarioTable.read_csv(path)
    path.write_text("prob,a\n0.5,1.0\n0.5\n")
    with pytest.raises(ValueError):
        ScenarioTable.read_csv(path)


def test_bundled_table(table):
    assert (table.n, table.dim) == (4, 3)
    np.testing.assert_allclose(table.mean(), [0.45, 0.4, 0.3], rtol=1e-12)


@pytest.mark.parametrize("tag", ["kkt-ec", "kkt-cc", "cvar", "mean-dev", "moment"])
def test_registry(tag):
    p = make_problem(tag)
    assert p.name == tag
    assert p.feasible_set.dim == p.oracle.dims.d_x
