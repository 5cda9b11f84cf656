import numpy as np
import pytest

from analytics.metrics import spearman
from labeling.comparisons_reader import (TIE, WIN_A, WIN_B, ComparisonRecord, read_comparisons,
                                         write_comparisons)
from labeling.graph import center_per_component, graph_laplacian, laplacian_half
from labeling.mnl import expand_records, mnl_loglik, mnl_loglik_and_grad, mnl_probability
from labeling.simulate import pair_design, planted_utilities, simulate_comparisons
from labeling.solver import (SolverConfig, bb_step, fit_mnl, nuclear_norm, select_lambda,
                             svt_prox)


# -------------------------------------------------
# READER
# -------------------------------------------------
def test_read_integer_items(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text("# header\n0\t2\t0\tA\n\n2\t1\t1\tb\n1\t0\t0\tT\n")
    records, ids, issues = read_comparisons(path)
    assert ids == ["0", "1", "2"]
    assert records[1] == ComparisonRecord(2, 1, 1, WIN_B)
    assert records[2].outcome == TIE
    assert issues == []


def test_read_string_items_in_first_seen_order(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text("clip_b\tclip_a\t0\tA\nclip_c\tclip_b\t0\tB\n")
    records, ids, _ = read_comparisons(path)
    assert ids == ["clip_b", "clip_a", "clip_c"]
    assert records[1] == ComparisonRecord(2, 0, 0, WIN_B)


def test_malformed_lines_become_issues(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text("0\t1\t0\tA\n0\t1\tx\tA\n0\t1\t0\tWIN\n1\t1\t0\tA\n0\t1\t0\n0\t1\t-1\tA\n")
    records, _, issues = read_comparisons(path)
    assert len(records) == 1
    assert [i["LINE"] for i in issues] == [2, 3, 4, 5, 6]


def test_missing_comparison_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_comparisons(tmp_path / "missing.tsv")


def test_write_then_read_preserves_records(tmp_path):
    records = [ComparisonRecord(0, 1, 0, WIN_A), ComparisonRecord(1, 2, 1, TIE)]
    write_comparisons(tmp_path / "c.tsv", records, ["x", "y", "z"])
    back, ids, _ = read_comparisons(tmp_path / "c.tsv")
    assert back == records and ids == ["x", "y", "z"]


def test_record_validation():
    with pytest.raises(ValueError):
        ComparisonRecord(1, 1, 0, WIN_A)
    with pytest.raises(ValueError):
        ComparisonRecord(0, 1, 0, "X")


# -------------------------------------------------
# LIKELIHOOD
# -------------------------------------------------
def test_mnl_probability_symmetry():
    assert mnl_probability(1.0, 1.0) == pytest.approx(0.5)
    assert mnl_probability(2.0, 0.5) + mnl_probability(0.5, 2.0) == pytest.approx(1.0)


def test_tie_counts_as_half_win_each_way():
    data = expand_records([ComparisonRecord(0, 1, 0, TIE)])
    assert len(data) == 2 and data.n == pytest.approx(1.0)
    theta = np.array([[0.3], [-0.2]])
    d = 0.5
    expected = 0.5 * (d - np.logaddexp(0, d)) + 0.5 * (-np.logaddexp(0, d))
    assert mnl_loglik(data, theta) == pytest.approx(expected)


def test_loglik_gradient_matches_finite_differences(rng):
    records = simulate_comparisons(rng.standard_normal((6, 2)), 4, seed=1)
    data = expand_records(records)
    theta = rng.standard_normal((6, 2))
    _, grad = mnl_loglik_and_grad(data, theta)
    h = 1e-6
    for i, t in [(0, 0), (3, 1), (5, 0)]:
        plus, minus = theta.copy(), theta.copy()
        plus[i, t] += h
        minus[i, t] -= h
        numeric = (mnl_loglik(data, plus) - mnl_loglik(data, minus)) / (2 * h)
        assert grad[i, t] == pytest.approx(numeric, rel=1e-6, abs=1e-10)


def test_empty_records_rejected():
    with pytest.raises(ValueError):
        mnl_loglik(expand_records([]), np.zeros((2, 1)))


# -------------------------------------------------
# GRAPH
# -------------------------------------------------
def test_laplacian_of_single_edge():
    graph = graph_laplacian([ComparisonRecord(0, 1, 0, WIN_A), ComparisonRecord(1, 0, 1, WIN_A)], 3)
    np.testing.assert_array_equal(graph.laplacian, [[2, -2, 0], [-2, 2, 0], [0, 0, 0]])
    assert graph.n_components == 2


def test_laplacian_half_powers(rng):
    records = simulate_comparisons(rng.standard_normal((8, 1)), 3, seed=2)
    L = graph_laplacian(records, 8).laplacian
    root, pinv_root, basis = laplacian_half(L)
    np.testing.assert_allclose(root @ root, L, atol=1e-9)
    projector = np.eye(8) - np.full((8, 8), 1.0 / 8)
    np.testing.assert_allclose(root @ pinv_root, projector, atol=1e-9)
    assert basis.shape == (8, 1)
    np.testing.assert_allclose(np.abs(basis[:, 0]), 1.0 / np.sqrt(8), atol=1e-9)


def test_laplacian_of_complete_graph_unit_weights():
    n = 4
    L = n * np.eye(n) - np.ones((n, n))
    root, _, _ = laplacian_half(L)
    # eigenvalues are 0 and n, so the square root is L / sqrt(n)
    np.testing.assert_allclose(root, L / np.sqrt(n), atol=1e-12)


def test_center_per_component():
    theta = np.array([[1.0], [3.0], [5.0], [9.0]])
    out = center_per_component(theta, np.array([0, 0, 1, 1]))
    np.testing.assert_allclose(out[:, 0], [-1.0, 1.0, -2.0, 2.0])


# -------------------------------------------------
# SOLVER
# -------------------------------------------------
def test_svt_diagonal_example():
    out = svt_prox(np.diag([3.0, 1.0, 0.5]), 1.0)
    np.testing.assert_allclose(out, np.diag([2.0, 0.0, 0.0]), atol=1e-12)


def test_svt_zero_threshold_is_identity(rng):
    M = rng.standard_normal((4, 3))
    np.testing.assert_allclose(svt_prox(M, 0.0), M, atol=1e-12)
    with pytest.raises(ValueError):
        svt_prox(M, -1.0)


def test_nuclear_norm():
    assert nuclear_norm(np.diag([2.0, -3.0])) == pytest.approx(5.0)


def test_bb_step_fallbacks():
    assert bb_step([1.0, 0.0], [2.0, 0.0], previous=0.7) == pytest.approx(0.5)
    assert bb_step([1.0, 0.0], [-1.0, 0.0], previous=0.7) == 0.7
    assert bb_step([1.0], [1e-12], previous=0.7, step_max=10.0) == 10.0


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig.from_dict({"lam": -1.0})
    with pytest.raises(ValueError):
        SolverConfig.from_dict({"alpha": 0.0})
    with pytest.raises(ValueError):
        SolverConfig.from_dict({"bogus": 1})


def test_planted_utilities_are_centred_low_rank():
    theta = planted_utilities(30, 4, rank=2, scale=1.5, seed=0)
    np.testing.assert_allclose(theta.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(theta.std(axis=0), 1.5)
    assert np.linalg.matrix_rank(theta) == 2


def test_pair_design_is_connected():
    pairs = pair_design(10, 4, np.random.default_rng(0))
    assert len(pairs) == 20
    records = [ComparisonRecord(a, b, 0, WIN_A) for a, b in pairs]
    assert graph_laplacian(records, 10).n_components == 1


def test_simulated_ties():
    theta = np.array([[0.0], [0.01], [3.0]])
    records = simulate_comparisons(theta, 2, seed=0, tie_band=0.1)
    for r in records:
        gap = abs(theta[r.item_a, 0] - theta[r.item_b, 0])
        assert (r.outcome == TIE) == (gap < 0.1)


def test_recovery_on_planted_utilities():
    theta_star = planted_utilities(60, 3, rank=2, scale=1.5, seed=6)
    records = simulate_comparisons(theta_star, 40, seed=7)
    fit = fit_mnl(records, 60, 3, SolverConfig())
    rho = [spearman(fit.theta[:, t], theta_star[:, t]) for t in range(3)]
    assert min(rho) >= 0.9
    assert np.all(np.diff(fit.objective) <= 1e-12 * abs(fit.objective[0]))
    np.testing.assert_allclose(fit.theta.mean(axis=0), 0.0, atol=1e-10)
    assert fit.flagged_items == []


@pytest.mark.parametrize("pairs_per_item", [10, 20, 40])
@pytest.mark.parametrize("seed", range(5))
def test_fit_converges_across_designs(seed, pairs_per_item):
    theta_star = planted_utilities(60, 3, seed=seed)
    records = simulate_comparisons(theta_star, pairs_per_item, seed=seed + 1)
    fit = fit_mnl(records, 60, 3, SolverConfig())
    assert np.isfinite(fit.theta).all()
    np.testing.assert_allclose(fit.theta.mean(axis=0), 0.0, atol=1e-10)


def test_recovery_improves_with_more_comparisons():
    mean_rho = []
    for pairs_per_item in (10, 20, 40):
        rho = []
        for seed in range(4):
            theta_star = planted_utilities(60, 3, seed=seed)
            records = simulate_comparisons(theta_star, pairs_per_item, seed=seed + 1)
            fit = fit_mnl(records, 60, 3, SolverConfig())
            rho.append(min(spearman(fit.theta[:, t], theta_star[:, t]) for t in range(3)))
        mean_rho.append(np.mean(rho))
    assert mean_rho[0] < mean_rho[1] < mean_rho[2]
    assert mean_rho[2] >= 0.9


def test_fit_is_translation_invariant():
    # two components: items 0-4 and 5-9
    theta_star = np.linspace(-1.0, 1.0, 10)[:, None] * np.array([[1.0, -0.5]])
    records = [r for r in simulate_comparisons(theta_star, 6, seed=3)
               if (r.item_a < 5) == (r.item_b < 5)]
    records += [ComparisonRecord(i, i + 1, t, TIE) for i in (0, 1, 2, 3, 5, 6, 7, 8)
                for t in range(2)]
    fit = fit_mnl(records, 10, 2, SolverConfig())
    assert len(set(fit.labels.tolist())) == 2

    shifted = fit.theta.copy()
    shifted[:5, 0] += 3.0
    shifted[5:, 1] -= 7.5
    np.testing.assert_allclose(center_per_component(shifted, fit.labels), fit.theta, atol=1e-8)
    data = expand_records(records)
    assert mnl_loglik(data, shifted) == pytest.approx(fit.loglik, abs=1e-8)


def test_equal_utilities_win_half_the_time():
    records = simulate_comparisons(np.zeros((60, 2)), 40, seed=11)
    n = len(records)
    wins = sum(r.outcome == WIN_A for r in records)
    assert abs(wins - n / 2) <= 3.0 * np.sqrt(n * 0.25)


def test_singleton_components_are_flagged():
    records = [ComparisonRecord(0, 1, 0, WIN_A), ComparisonRecord(1, 0, 0, WIN_A),
               ComparisonRecord(0, 1, 0, WIN_A)]
    fit = fit_mnl(records, 3, 1, SolverConfig(lam=0.0, max_iter=50))
    assert fit.flagged_items == [2]
    assert fit.theta[2, 0] == 0.0
    assert fit.theta[0, 0] > fit.theta[1, 0]
    assert fit.theta[0, 0] == pytest.approx(-fit.theta[1, 0])


def test_fit_rejects_out_of_range_items():
    with pytest.raises(ValueError):
        fit_mnl([ComparisonRecord(0, 5, 0, WIN_A)], 3, 1)


def test_select_lambda_picks_from_grid(capsys):
    theta_star = planted_utilities(20, 2, seed=1)
    records = simulate_comparisons(theta_star, 10, seed=2)
    best, scores = select_lambda(records, 20, 2, grid=(1e-4, 1e-1),
                                 config=SolverConfig(max_iter=100))
    assert best in (1e-4, 1e-1)
    assert set(scores) == {1e-4, 1e-1}
    assert "held-out" in capsys.readouterr().out
