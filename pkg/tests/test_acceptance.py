"""Acceptance suite: one pass/fail line per requirement of the package
contract, with independent oracles throughout.

The replication-grid checks (test_01*, test_02*) share one desk-scale run:
30 cells x 50 replications on 1e5-point datasets, roughly 12 minutes on a
single CPU (set RAREMIX_WORKERS to parallelize over cells).

Tests marked known_mismatch are documented expected failures. Each keeps its
stated tolerance and reports the real gap, and each has a green companion
exercising the same machinery where its premise holds. README.md ("Expected
failures") carries the analysis.
"""

import json

import numpy as np
import pytest
from scipy.stats import norm

from raremix.cli import main
from raremix.contraction import (
    BLOCK_NAMES,
    block_slices,
    gaussian_ratio_integrals,
    jacobian_analytic,
    jacobian_fd,
    limit_matrix_M,
    limit_matrix_Mstar,
)
from raremix.core import LabeledDataset
from raremix.em import FitConfig, em_step, fit, init_true_perturbed, mem_step
from raremix.evalkit import (
    ScoredGroup,
    auc,
    evaluate_groups,
    fp_at_full_recall,
    score_points,
)
from raremix.simlab import SimDesign, generate_dataset, resolve_workers, run_experiment

from conftest import draw_instance, mild_1d, random_theta, well_separated_1d
from test_contraction import (
    assert_blocks_match_gauss_hermite_1d,
    assert_blocks_within_mc,
    assert_jacobians_close,
    assert_ratio_matches_tensor_quad_2d,
    max_abs,
    random_diagonal_theta_2d,
    ratio_integrals_quad_1d,
)
from test_evalkit import auc_by_pair_enumeration, fp_by_threshold_sweep

ALPHAS = (0.5, 0.2, 0.1, 0.01, 0.001)
FRACS = (0.0, 0.01, 0.05, 0.10, 0.25, 0.50)

# Full-scale grid aggregates (500 replications per cell, N + m = 1e5) that the
# desk-scale run must approximate: (alpha, label_frac) ->
# (rmse, mean_rho, mean_n_iter).
REFERENCE = {
    (0.5, 0.0): (0.0092, 0.9323, 119.64),
    (0.5, 0.01): (0.0087, 0.9229, 106.42),
    (0.5, 0.05): (0.0074, 0.8856, 74.14),
    (0.5, 0.10): (0.0067, 0.8389, 53.68),
    (0.5, 0.25): (0.0057, 0.6990, 28.91),
    (0.5, 0.50): (0.0052, 0.4661, 15.00),
    (0.2, 0.0): (0.0120, 0.9419, 146.69),
    (0.2, 0.01): (0.0113, 0.9324, 127.52),
    (0.2, 0.05): (0.0095, 0.8949, 84.37),
    (0.2, 0.10): (0.0078, 0.8479, 59.34),
    (0.2, 0.25): (0.0068, 0.7065, 30.86),
    (0.2, 0.50): (0.0061, 0.4710, 16.00),
    (0.1, 0.0): (0.0165, 0.9533, 176.60),
    (0.1, 0.01): (0.0151, 0.9437, 148.69),
    (0.1, 0.05): (0.0126, 0.9057, 92.02),
    (0.1, 0.10): (0.0102, 0.8579, 62.54),
    (0.1, 0.25): (0.0084, 0.7150, 31.37),
    (0.1, 0.50): (0.0074, 0.4768, 16.00),
    (0.01, 0.0): (0.0663, 0.9839, 436.16),
    (0.01, 0.01): (0.0529, 0.9735, 274.70),
    (0.01, 0.05): (0.0393, 0.9344, 122.57),
    (0.01, 0.10): (0.0306, 0.8852, 75.00),
    (0.01, 0.25): (0.0245, 0.7382, 33.92),
    (0.01, 0.50): (0.0199, 0.4919, 16.29),
    (0.001, 0.0): (0.2668, 0.9992, 733.78),
    (0.001, 0.01): (0.1932, 0.9889, 456.11),
    (0.001, 0.05): (0.1363, 0.9488, 147.65),
    (0.001, 0.10): (0.1055, 0.8989, 82.34),
    (0.001, 0.25): (0.0725, 0.7493, 34.55),
    (0.001, 0.50): (0.0593, 0.5019, 16.39),
}

RHO_TOL = {0.5: 0.01, 0.2: 0.01, 0.1: 0.01, 0.01: 0.01, 0.001: 0.03}
ITER_REL = {0.5: 0.15, 0.2: 0.15, 0.1: 0.15, 0.01: 0.30, 0.001: 0.30}
RMSE_REL = 0.25


@pytest.fixture(scope="module")
def desk_grid():
    design = SimDesign.paper_grid(seed=0, desk=True)
    return run_experiment(design, workers=resolve_workers(None))


def _cell_gaps(report, column, tolerance, exclude=()):
    """Cells whose aggregate misses the reference: (alpha, frac, got, want)."""
    bad = []
    for (alpha, frac), refs in REFERENCE.items():
        if (alpha, frac) in exclude:
            continue
        want = refs[{"rmse": 0, "rho": 1, "n_iter": 2}[column]]
        cell = report.cell(alpha, frac)
        got = {"rmse": cell.rmse, "rho": cell.mean_rho, "n_iter": cell.mean_n_iter}[
            column
        ]
        if not tolerance(alpha, got, want):
            bad.append((alpha, frac, round(got, 4), want))
    return bad


@pytest.mark.slow
def test_01a_mean_rho_strictly_decreasing_in_label_fraction(desk_grid):
    for alpha in ALPHAS:
        rhos = [desk_grid.cell(alpha, f).mean_rho for f in FRACS]
        assert np.all(np.diff(rhos) < 0), (
            f"alpha={alpha}: mean_rho not strictly decreasing across "
            f"label fractions: {np.round(rhos, 4).tolist()}"
        )


@pytest.mark.slow
def test_01b_mean_rho_increasing_as_events_get_rarer(desk_grid):
    for frac in FRACS:
        rhos = [desk_grid.cell(a, frac).mean_rho for a in ALPHAS]
        assert np.all(np.diff(rhos) > 0), (
            f"label_frac={frac}: mean_rho not increasing as the event "
            f"probability falls: {np.round(rhos, 4).tolist()}"
        )


@pytest.mark.slow
def test_01c_mean_rho_matches_reference_per_cell(desk_grid):
    bad = _cell_gaps(
        desk_grid, "rho", lambda alpha, got, want: abs(got - want) <= RHO_TOL[alpha]
    )
    assert not bad, f"mean_rho outside tolerance (alpha, frac, got, want): {bad}"


@pytest.mark.slow
def test_01d_mean_iterations_match_reference_per_cell(desk_grid):
    # The rarest zero-label cell's count sits near the tolerance edge and its
    # aggregate excludes replications that hit the iteration cap (reported in
    # the n_failed column and the per-cell failed flag; 14/50 at this seed).
    bad = _cell_gaps(
        desk_grid,
        "n_iter",
        lambda alpha, got, want: abs(got - want) <= ITER_REL[alpha] * want,
    )
    assert not bad, f"mean_n_iter outside tolerance (alpha, frac, got, want): {bad}"


@pytest.mark.slow
def test_01e_rmse_matches_reference_per_cell(desk_grid):
    bad = _cell_gaps(
        desk_grid, "rmse", lambda alpha, got, want: abs(got - want) <= RMSE_REL * want
    )
    assert not bad, f"rmse outside tolerance (alpha, frac, got, want): {bad}"


@pytest.mark.slow
def test_02_labeled_fraction_rescales_mean_rho_linearly(desk_grid):
    base = desk_grid.cell(0.5, 0.0).mean_rho
    for frac in (0.25, 0.50):
        got = desk_grid.cell(0.5, frac).mean_rho
        want = (1.0 - frac) * base
        assert abs(got - want) <= 0.02, (
            f"label_frac={frac}: mean_rho {got:.4f} vs scaled baseline {want:.4f}"
        )


def test_03_limit_matrix_has_unit_eigenvalue_and_singular_shift():
    rng = np.random.default_rng(1313)
    for p in (1, 2):
        for _ in range(10):
            theta = random_theta(rng, p, require_ratio_pd=True)
            limit = limit_matrix_M(theta)
            shift = limit.mat - np.eye(theta.q)
            det = float(np.linalg.det(shift))
            svals = np.linalg.svd(shift, compute_uv=False)
            scale = max(1.0, float(np.prod(svals[:-1])))
            assert abs(det) <= 1e-8 * scale
            assert limit.spectral_radius >= 1.0 - 1e-10


def test_04_pooled_limit_blocks_scale_exactly():
    rng = np.random.default_rng(424)
    thetas = [
        well_separated_1d(),
        mild_1d(),
        random_theta(rng, 1, require_ratio_pd=True),
        random_theta(rng, 2, require_ratio_pd=True),
    ]
    for theta in thetas:
        base = limit_matrix_M(theta)
        sl = block_slices(theta.p)
        for kappa in (0.0, 1.0 / 3.0, 1.0, 3.0):
            star = limit_matrix_Mstar(theta, kappa)
            want = base.mat * (1.0 / (1.0 + kappa))
            want[sl["mu1"], 0] = 0.0
            want[sl["sigma1"], 0] = 0.0
            assert np.array_equal(star.mat, want)
            assert np.all(star.block("mu1", "alpha") == 0.0)
            assert np.all(star.block("sigma1", "alpha") == 0.0)
            for row in BLOCK_NAMES:
                for col in BLOCK_NAMES:
                    if (row, col) in (("mu1", "alpha"), ("sigma1", "alpha")):
                        continue
                    assert np.array_equal(
                        star.block(row, col),
                        base.block(row, col) * (1.0 / (1.0 + kappa)),
                    )


def _assert_jacobian_near_limit(theta, seed, n=1_000_000, floor=1e-3, rel=0.05):
    data, _ = generate_dataset(theta.alpha, theta, n, np.random.default_rng(seed))
    report = jacobian_analytic("em", data, None, theta)
    limit = limit_matrix_M(theta)
    bad = []
    for row in BLOCK_NAMES:
        for col in BLOCK_NAMES:
            want = limit.block(row, col)
            if max_abs(want) <= floor:
                continue
            gap = max_abs(report.block(row, col) - want) / max_abs(want)
            if gap > rel:
                bad.append((row, col, round(gap, 4)))
    assert not bad, f"Jacobian blocks away from the limit (row, col, rel gap): {bad}"


@pytest.mark.known_mismatch
def test_05_sample_jacobian_reaches_limit_strong_separation():
    # At this parameter point the squared-ratio mass is e^9 ~ 8103, so
    # alpha=1e-3 leaves alpha*mass ~ 8.1: far outside the small-weight regime
    # the limit describes. The gap is real, not sampling noise (population
    # quadrature shows the same deviations at every N). Kept at the stated
    # setting; the companion below runs the identical procedure at a point
    # whose mass is ~2.1, where alpha=1e-3 is genuinely asymptotic.
    _assert_jacobian_near_limit(well_separated_1d(alpha=1e-3), seed=314159)


def test_05_sample_jacobian_reaches_limit_mild_overlap():
    _assert_jacobian_near_limit(mild_1d(alpha=1e-3), seed=314159)


def test_06_analytic_jacobians_match_central_differences():
    rng = np.random.default_rng(77177)
    for p in (1, 2):
        for _ in range(10):
            theta, data, labeled = draw_instance(rng, p, 500, m=60)
            got = jacobian_analytic("em", data, None, theta)
            want = jacobian_fd("em", data, None, theta)
            assert_jacobians_close(got.jac, want.jac)
            got = jacobian_analytic("mem", data, labeled, theta)
            want = jacobian_fd("mem", data, labeled, theta)
            assert_jacobians_close(got.jac, want.jac)


def test_07a_ratio_moments_match_adaptive_quadrature():
    rng = np.random.default_rng(2255)
    thetas = [mild_1d(), well_separated_1d()]
    thetas += [random_theta(rng, 1, require_ratio_pd=True) for _ in range(3)]
    for theta in thetas:
        want_mu, want_sigma = ratio_integrals_quad_1d(theta)
        got_mu, got_sigma = gaussian_ratio_integrals(theta)
        assert got_mu[0] == pytest.approx(want_mu, rel=1e-8)
        assert got_sigma[0, 0] == pytest.approx(want_sigma, rel=1e-8)
    for _ in range(2):
        assert_ratio_matches_tensor_quad_2d(random_diagonal_theta_2d(rng))


def test_07b_moment_blocks_match_seeded_monte_carlo():
    assert_blocks_within_mc(mild_1d(), n_draws=10_000_000, seed=2026, n_se=3.0)
    rng = np.random.default_rng(887)
    theta = random_theta(rng, 2, require_ratio_pd=True)
    assert_blocks_within_mc(theta, n_draws=10_000_000, seed=2027, n_se=3.0)


def test_07c_moment_blocks_match_gauss_hermite():
    rng = np.random.default_rng(991)
    for theta in (mild_1d(), well_separated_1d(), random_theta(rng, 1)):
        assert_blocks_match_gauss_hermite_1d(theta, tol=1e-10)


def test_08_fits_are_monotone_and_land_on_fixed_points():
    rng = np.random.default_rng(515)
    config = FitConfig(tol=1e-6, max_iter=5000, record_trace=True)
    converged = 0
    for i in range(50):
        p = 1 if i % 2 == 0 else 2
        m = 50 if i % 4 in (1, 3) else 0
        theta_true, data, labeled = draw_instance(rng, p, 400, m=m)
        theta0 = init_true_perturbed(theta_true, rng=rng)

        # The pooled step with an empty labeled set is the plain step.
        a = em_step(data, theta0).pack()
        b = mem_step(data, LabeledDataset.empty(p), theta0).pack()
        assert np.all(np.abs(a - b) <= 1e-15)

        result = fit(data, labeled if m else None, theta0, config)
        trace = np.asarray(result.loglik_trace)
        slack = 1e-10 * np.maximum(1.0, np.abs(trace[:-1]))
        assert np.all(np.diff(trace) >= -slack), f"instance {i}: loglik decreased"
        if result.converged:
            step = (
                (lambda t: mem_step(data, labeled, t))
                if m
                else (lambda t: em_step(data, t))
            )
            residual = max_abs(step(result.theta_hat).pack() - result.theta_hat.pack())
            assert residual <= config.tol, f"instance {i}: residual {residual:.3g}"
            converged += 1
    assert converged >= 40, f"only {converged}/50 instances converged"


def test_09a_auc_equals_pair_enumeration_exhaustively():
    rng = np.random.default_rng(424242)
    grid = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
    for n in range(2, 13):
        for bits in range(1, 2**n - 1):
            labels = np.array([(bits >> i) & 1 for i in range(n)], dtype=np.int8)
            scores = rng.choice(grid, size=n)
            assert auc(scores, labels) == auc_by_pair_enumeration(scores, labels)
    # Fixed edge cases on top of the sweep.
    assert auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert auc([0.1, 0.2, 0.9], [1, 1, 0]) == 0.0
    assert auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5


def test_09b_fp_at_full_recall_equals_threshold_sweep():
    rng = np.random.default_rng(31415)
    for _ in range(200):
        n = int(rng.integers(2, 40))
        labels = rng.integers(0, 2, size=n)
        if labels.sum() == 0:
            labels[int(rng.integers(0, n))] = 1
        scores = rng.choice(np.linspace(0.0, 1.0, 9), size=n)
        assert fp_at_full_recall(scores, labels) == fp_by_threshold_sweep(
            scores, labels
        )


def test_09c_synthetic_scoring_auc_matches_theory():
    # Unit-variance components 3 apart: the score-ranked separation of the
    # two classes has AUC Phi(3/sqrt(2)) regardless of the mixing weight.
    theta = well_separated_1d(alpha=0.2)
    data, labels = generate_dataset(theta.alpha, theta, 100_000, np.random.default_rng(6060))
    scores = score_points(theta, data.x)
    groups = [
        ScoredGroup(group_id=str(g), scores=scores[g::10], labels=labels[g::10])
        for g in range(10)
    ]
    summary = evaluate_groups(groups)
    want = float(norm.cdf(3.0 / np.sqrt(2.0)))
    assert abs(summary.mean_auc - want) <= 0.01


def test_10_simulate_rerun_is_byte_identical(tmp_path):
    design = {
        "n_total": 2000,
        "alphas": [0.5, 0.01],
        "label_fracs": [0.0, 0.25],
        "reps": 2,
        "seed": 3,
        "tol": 1e-5,
    }
    config = tmp_path / "design.json"
    config.write_text(json.dumps(design))
    outputs = []
    for name in ("first", "second"):
        out = tmp_path / name
        assert main(["simulate", "--config", str(config), "--out", str(out)]) == 0
        outputs.append((out / "cells.csv").read_bytes())
    assert outputs[0] == outputs[1]
