"""
Verify Suite
============
Invariant checks run by `run_crmf.py verify`: manifold closure, gyrogroup
identities, map round-trips, gradient checks, metric oracles, soft
winsorization, singular value thresholding and the labeling recovery
experiment. The synthetic benchmark ablation runs only when named.
Each check returns a CheckResult; any failure makes the run fail.
"""

import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from analytics.metrics import c_index, kendall_tau_b, spearman
from geometry import manifolds
from labeling.simulate import planted_utilities, simulate_comparisons
from labeling.solver import SolverConfig, fit_mnl, nuclear_norm, svt_prox
from losses.winsorize import soft_winsorize
from tensorcore import Tensor, ops
from tensorcore.gradcheck import check_gradients, check_param_gradients

# independent of geometry.manifolds.BALL_MARGIN so a wrong margin is caught
EXPECTED_BALL_MARGIN = 1e-5
ROUNDOFF = 1e-12
IDENTITY_TOL = 1e-10
ROUND_TRIP_TOL = 1e-9
GRAD_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _random_ball(rng, n, d, c, max_frac=0.99):
    x = rng.standard_normal((n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * rng.uniform(0.0, max_frac, size=(n, 1)) / np.sqrt(c)


def _random_tangent(rng, p, max_norm):
    w = rng.standard_normal(p.shape)
    w -= (w * p).sum(axis=1, keepdims=True) * p
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    return w * rng.uniform(0.0, max_norm, size=(p.shape[0], 1))


# =================================================
# MANIFOLDS
# =================================================

def check_manifold_closure(n: int = 10_000, d: int = 8, seed: int = 0) -> CheckResult:
    """Ball outputs stay within the margin; sphere outputs have unit norm."""
    rng = np.random.default_rng(seed)
    worst_ball, worst_sphere = -np.inf, 0.0
    for c in (1.0, 0.5):
        limit = 1.0 - EXPECTED_BALL_MARGIN + ROUNDOFF
        v = rng.standard_normal((n, d)) * rng.uniform(0.0, 20.0, size=(n, 1))
        x, y = _random_ball(rng, n, d, c), _random_ball(rng, n, d, c)
        M = rng.standard_normal((d, d))
        outputs = [manifolds.exp0(v, c), manifolds.mobius_add(x, y, c),
                   manifolds.mobius_matvec(M, x, c), manifolds.project_to_ball(v, c)]
        for out in outputs:
            excess = (np.sqrt(c) * np.linalg.norm(out.data, axis=1)).max() - limit
            worst_ball = max(worst_ball, float(excess))

    p = manifolds.project_to_sphere(rng.standard_normal((n, d))).data
    for out in (manifolds.project_to_sphere(rng.standard_normal((n, d))),
                manifolds.sphere_exp(p, rng.standard_normal((n, d)) * 3.0)):
        worst_sphere = max(worst_sphere, manifolds.sphere_violation(out))

    passed = worst_ball <= 0.0 and worst_sphere <= 1e-12
    return CheckResult("manifold_closure", passed,
                       f"ball excess {worst_ball:.3e}, sphere |‖x‖-1| {worst_sphere:.3e}")


def check_gyrogroup(n: int = 10_000, d: int = 8, seed: int = 1) -> CheckResult:
    """0 ⊕ x = x and (-x) ⊕ x = 0."""
    rng = np.random.default_rng(seed)
    worst_identity, worst_inverse = 0.0, 0.0
    for c in (1.0, 0.5):
        x = _random_ball(rng, n, d, c)
        identity = manifolds.mobius_add(np.zeros_like(x), x, c).data
        inverse = manifolds.mobius_add(-x, x, c).data
        worst_identity = max(worst_identity, float(np.abs(identity - x).max()))
        worst_inverse = max(worst_inverse, float(np.abs(inverse).max()))
    passed = worst_identity <= IDENTITY_TOL and worst_inverse <= IDENTITY_TOL
    return CheckResult("gyrogroup_identities", passed,
                       f"left identity {worst_identity:.3e}, left inverse {worst_inverse:.3e}")


def check_round_trips(n: int = 10_000, d: int = 8, seed: int = 2) -> CheckResult:
    """log0∘exp0, exp0∘log0, log_p∘exp_p and exp_p∘log_p are identities."""
    rng = np.random.default_rng(seed)
    errors = {}
    c = 1.0
    v = rng.standard_normal((n, d))
    v = v / np.linalg.norm(v, axis=1, keepdims=True) * rng.uniform(0.0, 3.0, size=(n, 1))
    errors["log0(exp0 v)"] = np.abs(manifolds.log0(manifolds.exp0(v, c), c).data - v).max()
    x = _random_ball(rng, n, d, c)
    errors["exp0(log0 x)"] = np.abs(manifolds.exp0(manifolds.log0(x, c), c).data - x).max()

    p = manifolds.project_to_sphere(rng.standard_normal((n, d))).data
    w = _random_tangent(rng, p, 3.0)
    errors["log_p(exp_p v)"] = np.abs(
        manifolds.sphere_log(p, manifolds.sphere_exp(p, w)).data - w).max()
    q = manifolds.project_to_sphere(rng.standard_normal((n, d))).data
    keep = (p * q).sum(axis=1) > -0.9
    p, q = p[keep], q[keep]
    errors["exp_p(log_p x)"] = np.abs(
        manifolds.sphere_exp(p, manifolds.sphere_log(p, q)).data - q).max()

    worst = max(errors.values())
    detail = ", ".join(f"{k} {v:.2e}" for k, v in errors.items())
    return CheckResult("map_round_trips", bool(worst <= ROUND_TRIP_TOL), detail)


# =================================================
# GRADIENTS
# =================================================

def _op_cases(rng) -> List[Tuple[str, Callable[[Tensor], Tensor], np.ndarray]]:
    w = rng.standard_normal((3, 4)) * 0.1
    B = rng.standard_normal((4, 5))
    small = rng.uniform(0.2, 0.8, size=(3, 4))
    tiny = rng.standard_normal((3, 4)) * 1e-4
    p = manifolds.project_to_sphere(rng.standard_normal((3, 4))).data

    def weighted(out: Tensor) -> Tensor:
        return ops.reduce_sum(out * w[..., :out.shape[-1]]) if out.ndim == 2 \
            else ops.reduce_sum(out * 0.1)

    return [
        ("matmul", lambda x: weighted(ops.matmul(x, B)[:, :4]), rng.standard_normal((3, 4))),
        ("exp", lambda x: weighted(ops.exp(x)), rng.standard_normal((3, 4))),
        ("log", lambda x: weighted(ops.log(x)), small),
        ("tanh", lambda x: weighted(ops.tanh(x)), rng.standard_normal((3, 4))),
        ("sigmoid", lambda x: weighted(ops.sigmoid(x)), rng.standard_normal((3, 4))),
        ("gelu", lambda x: weighted(ops.gelu(x)), rng.standard_normal((3, 4))),
        ("softmax", lambda x: weighted(ops.softmax(x)), rng.standard_normal((3, 4))),
        ("layer_norm", lambda x: weighted(ops.layer_norm(x)), rng.standard_normal((3, 4))),
        ("norm", lambda x: weighted(ops.norm(x, axis=-1, keepdims=True)),
         rng.standard_normal((3, 4))),
        ("xlogx", lambda x: weighted(ops.xlogx(x)), small),
        ("tanh_ratio", lambda x: weighted(ops.tanh_ratio(x)), rng.standard_normal((3, 4))),
        ("tanh_ratio_series", lambda x: weighted(ops.tanh_ratio(x)), tiny),
        ("artanh_ratio", lambda x: weighted(ops.artanh_ratio(x)), small),
        ("sin_ratio", lambda x: weighted(ops.sin_ratio(x)), rng.standard_normal((3, 4))),
        ("exp0", lambda x: weighted(manifolds.exp0(x)), rng.standard_normal((3, 4))),
        ("log0", lambda x: weighted(manifolds.log0(x)), _random_ball(rng, 3, 4, 1.0, 0.9)),
        ("mobius_add", lambda x: weighted(manifolds.mobius_add(x, x[::-1] * 0.5)),
         _random_ball(rng, 3, 4, 1.0, 0.8)),
        ("sphere_log", lambda x: weighted(manifolds.sphere_log(p, manifolds.project_to_sphere(x))),
         p + 0.3 * rng.standard_normal((3, 4))),
        ("sphere_exp", lambda x: weighted(manifolds.sphere_exp(p, x)),
         rng.standard_normal((3, 4))),
    ]


def check_op_gradients(seed: int = 3) -> CheckResult:
    rng = np.random.default_rng(seed)
    errors = {name: check_gradients(f, x) for name, f, x in _op_cases(rng)}
    worst = max(errors, key=errors.get)
    return CheckResult("op_gradients", errors[worst] <= GRAD_TOL,
                       f"{len(errors)} ops, worst {worst} {errors[worst]:.2e}")


def crmf_loss_closure(seed: int):
    """Tiny-config model, 4 clips and the full balanced loss as a closure."""
    from engine.train_engine import active_components, compute_losses
    from losses.balancer import AdaptiveLossBalancer
    from losses.objectives import LossConfig
    from model.config import FeatureBundle, ModelConfig
    from model.crmf import CrmfModel

    cfg = ModelConfig.tiny()
    model = CrmfModel(cfg, seed=seed)
    rng = np.random.default_rng(seed + 100)
    bundles = [FeatureBundle(f"g{i}", rng.standard_normal((3, cfg.d_model)),
                             rng.standard_normal((2, cfg.d_model)),
                             rng.standard_normal((4, cfg.d_model)))
               for i in range(4)]
    y = rng.standard_normal((4, cfg.n_targets)) * 0.5
    loss_cfg = LossConfig()
    names = active_components(model, loss_cfg)
    balancer = AdaptiveLossBalancer(names)
    params = dict(model.store.items())
    params["balancer.alpha"] = balancer.alpha

    def loss_fn() -> Tensor:
        y_hat, r, _ = model.forward(bundles)
        total, _ = balancer.combine(compute_losses(y_hat, r, y, model, loss_cfg, names))
        return total

    return loss_fn, params


def check_model_gradients(seeds: int = 10, samples_per_param: int = 2) -> CheckResult:
    worst, worst_name = 0.0, ""
    for seed in range(seeds):
        loss_fn, params = crmf_loss_closure(seed)
        errors = check_param_gradients(loss_fn, params, samples_per_param=samples_per_param,
                                       seed=seed, pick="largest")
        name = max(errors, key=errors.get)
        if errors[name] >= worst:
            worst, worst_name = errors[name], f"{name} (seed {seed})"
    return CheckResult("crmf_loss_gradients", worst <= GRAD_TOL,
                       f"{seeds} seeds, worst {worst_name} {worst:.2e}")


# =================================================
# METRICS
# =================================================

def _mid_ranks(v: np.ndarray) -> np.ndarray:
    n = len(v)
    ranks = np.empty(n)
    for i in range(n):
        less = sum(1 for j in range(n) if v[j] < v[i])
        equal = sum(1 for j in range(n) if v[j] == v[i])
        ranks[i] = less + (equal + 1) / 2.0
    return ranks


def reference_spearman(x, y) -> float:
    rx, ry = _mid_ranks(np.asarray(x)), _mid_ranks(np.asarray(y))
    rx, ry = rx - rx.mean(), ry - ry.mean()
    den = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    return 0.0 if den == 0 else float((rx * ry).sum() / den)


def reference_kendall(x, y) -> float:
    concordant = discordant = ties_x = ties_y = 0
    n = len(x)
    for i in range(n):
        for j in range(i + 1, n):
            dx, dy = np.sign(x[i] - x[j]), np.sign(y[i] - y[j])
            if dx == 0 and dy == 0:
                continue
            if dx == 0:
                ties_x += 1
            elif dy == 0:
                ties_y += 1
            elif dx == dy:
                concordant += 1
            else:
                discordant += 1
    den = np.sqrt((concordant + discordant + ties_x) * (concordant + discordant + ties_y))
    return 0.0 if den == 0 else float((concordant - discordant) / den)


def reference_c_index(pred, truth) -> float:
    credit, comparable = 0.0, 0
    n = len(pred)
    for i in range(n):
        for j in range(i + 1, n):
            if truth[i] == truth[j]:
                continue
            comparable += 1
            hi, lo = (i, j) if truth[i] > truth[j] else (j, i)
            if pred[hi] > pred[lo]:
                credit += 1.0
            elif pred[hi] == pred[lo]:
                credit += 0.5
    if comparable == 0:
        raise ValueError("no comparable pairs")
    return credit / comparable


def check_metric_oracles(cases: int = 1000, seed: int = 4) -> CheckResult:
    rng = np.random.default_rng(seed)
    hand = [
        (spearman([1, 2, 3], [1, 3, 2]), 0.5),
        (kendall_tau_b([1, 2, 3], [1, 3, 2]), 1.0 / 3.0),
        (kendall_tau_b([1, 2, 3], [1, 1, 2]), 2.0 / np.sqrt(6.0)),
        (c_index([1, 2, 3], [1, 3, 2]), 2.0 / 3.0),
        (c_index([5, 5, 5], [1, 2, 3]), 0.5),
    ]
    hand_err = max(abs(a - b) for a, b in hand)

    worst = 0.0
    for _ in range(cases):
        n = int(rng.integers(5, 30))
        x = rng.integers(0, 8, size=n).astype(float)
        y = rng.integers(0, 8, size=n).astype(float)
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            continue
        worst = max(worst, abs(spearman(x, y) - reference_spearman(x, y)),
                    abs(kendall_tau_b(x, y) - reference_kendall(x, y)),
                    abs(c_index(x, y) - reference_c_index(x, y)))
    passed = hand_err <= 1e-12 and worst <= 1e-12
    return CheckResult("metric_oracles", passed,
                       f"hand cases {hand_err:.1e}, {cases} random cases worst {worst:.1e}")


# =================================================
# WINSORIZATION / SVT / RECOVERY
# =================================================

def check_winsorization() -> CheckResult:
    expected_at_3 = 1.5 + 1.5 * np.tanh(1.0)
    # tanh saturates to 1.0 in float64 past |x| ~ 30, so strictness is checked inside that
    strict = soft_winsorize(np.linspace(-15.0, 15.0, 10_000))
    wide = soft_winsorize(np.linspace(-50.0, 50.0, 10_000))
    checks = {
        "clip(1)": abs(float(soft_winsorize(1.0)) - 1.0) <= 1e-15,
        "clip(3)": abs(float(soft_winsorize(3.0)) - 2.6423912) <= 1e-6
                   and abs(float(soft_winsorize(3.0)) - expected_at_3) <= 1e-15,
        "asymptote": abs(float(soft_winsorize(1e6)) - 3.0) <= 1e-6,
        "monotone": bool(np.all(np.diff(strict) > 0) and np.all(np.diff(wide) >= 0)),
        "bounded": bool(np.abs(wide).max() <= 3.0),
    }
    failed = [k for k, ok in checks.items() if not ok]
    return CheckResult("soft_winsorization", not failed,
                       "all properties hold" if not failed else f"failed: {failed}")


def check_svt(cases: int = 100, seed: int = 5) -> CheckResult:
    """
    Diagonal example plus proximal optimality: X = prox_τ(M) must beat
    random perturbations on ½‖X - M‖² + τ‖X‖_*.
    """
    diag = svt_prox(np.diag([3.0, 1.0, 0.5]), 1.0)
    diag_err = float(np.abs(diag - np.diag([2.0, 0.0, 0.0])).max())

    rng = np.random.default_rng(seed)
    violations = 0
    for _ in range(cases):
        m, n = int(rng.integers(2, 7)), int(rng.integers(2, 7))
        M = rng.standard_normal((m, n))
        tau = float(rng.uniform(0.1, 2.0))
        X = svt_prox(M, tau)
        best = 0.5 * np.sum((X - M) ** 2) + tau * nuclear_norm(X)
        for _ in range(5):
            Z = X + 1e-3 * rng.standard_normal((m, n))
            if 0.5 * np.sum((Z - M) ** 2) + tau * nuclear_norm(Z) < best - 1e-12:
                violations += 1
                break
    passed = diag_err <= 1e-12 and violations == 0
    return CheckResult("svt_optimality", passed,
                       f"diag error {diag_err:.1e}, {violations}/{cases} optimality violations")


def check_recovery(n_items: int = 60, n_targets: int = 3, pairs_per_item: float = 40,
                   seed: int = 6) -> CheckResult:
    theta_star = planted_utilities(n_items, n_targets, rank=2, scale=1.5, seed=seed)
    records = simulate_comparisons(theta_star, pairs_per_item, seed=seed + 1)
    fit = fit_mnl(records, n_items, n_targets, SolverConfig())
    rho = min(spearman(fit.theta[:, t], theta_star[:, t]) for t in range(n_targets))
    monotone = bool(np.all(np.diff(fit.objective) <= 1e-12 * max(1.0, abs(fit.objective[0]))))
    centered = float(np.abs(fit.theta.mean(axis=0)).max())
    passed = rho >= 0.9 and monotone and centered <= 1e-10
    return CheckResult("labeling_recovery", passed,
                       f"min ρ {rho:.4f}, objective non-increasing {monotone}, "
                       f"column mean {centered:.1e}, {fit.iterations} iterations")


BENCHMARK_VARIANTS: Dict[str, Dict[str, str]] = {
    "full": {},
    "hyperbolic": {"geometry": "hyperbolic"},
    "spherical": {"geometry": "spherical"},
    "euclidean": {"geometry": "euclidean"},
    "uniform": {"routing": "uniform"},
}
BENCHMARK_THRESHOLD = 0.80


def run_benchmark(out_dir, seed: int = 0, n_clips: int = 2000, epochs: int = 30,
                  preset: str = "desk", variants: Optional[Dict[str, Dict[str, str]]] = None,
                  verbose: bool = False) -> Dict[str, float]:
    """Train each variant on the same synthetic split; best val macro Spearman per variant."""
    from data.dataset import synthetic_splits
    from data.synthetic import SyntheticSpec
    from engine.train_engine import TrainEngine
    from utils.config import resolve_config

    scores = {}
    for name, overrides in (variants or BENCHMARK_VARIANTS).items():
        cfg = resolve_config(run_overrides={"seed": seed, "epochs": epochs, "preset": preset,
                                            "synthetic_clips": n_clips},
                             model_overrides=overrides)
        spec = SyntheticSpec(seed=seed, n_clips=cfg.run.synthetic_clips,
                             n_users=cfg.run.synthetic_users, n_targets=cfg.model.n_targets,
                             d_model=cfg.model.d_model, noise=cfg.run.synthetic_noise)
        splits, _, _ = synthetic_splits(spec, seed)
        engine = TrainEngine(cfg, splits["train"], splits["val"], Path(out_dir) / name,
                             run_name=f"benchmark_{name}")
        scores[name] = float(engine.fit(verbose=verbose)["best_val_spearman"])
    return scores


def check_synthetic_benchmark(seed: int = 0, threshold: float = BENCHMARK_THRESHOLD,
                              **kwargs) -> CheckResult:
    """Full model reaches `threshold` and beats every other variant strictly."""
    with tempfile.TemporaryDirectory() as tmp:
        scores = run_benchmark(tmp, seed=seed, **kwargs)
    full = scores["full"]
    gaps = {name: full - rho for name, rho in scores.items() if name != "full"}
    passed = full >= threshold and all(gap > 0 for gap in gaps.values())
    detail = f"full ρ {full:.5f}; " + ", ".join(
        f"{name} {scores[name]:.5f} (gap {gap:+.5f})" for name, gap in gaps.items())
    return CheckResult("synthetic_benchmark", passed, detail)


CHECKS: Dict[str, Callable[[], CheckResult]] = {
    "manifold_closure": check_manifold_closure,
    "gyrogroup_identities": check_gyrogroup,
    "map_round_trips": check_round_trips,
    "op_gradients": check_op_gradients,
    "crmf_loss_gradients": check_model_gradients,
    "metric_oracles": check_metric_oracles,
    "soft_winsorization": check_winsorization,
    "svt_optimality": check_svt,
    "labeling_recovery": check_recovery,
}

# run only when named
EXTENDED_CHECKS: Dict[str, Callable[[], CheckResult]] = {
    "synthetic_benchmark": check_synthetic_benchmark,
}


def run_verify(only: Optional[List[str]] = None, verbose: bool = True) -> Tuple[bool, List[CheckResult]]:
    """
    Run the suite (or the named subset).

    Returns:
        (all passed, per-check results)
    """
    available = {**CHECKS, **EXTENDED_CHECKS}
    names = list(CHECKS) if not only else list(only)
    unknown = [n for n in names if n not in available]
    if unknown:
        raise ValueError(f"Unknown checks {unknown}; available: {list(available)}")

    if verbose:
        print("=" * 70)
        print("VERIFY SUITE")
        print("=" * 70)
    results = []
    start = time.time()
    for i, name in enumerate(names, start=1):
        t0 = time.time()
        try:
            result = available[name]()
        except Exception as e:
            result = CheckResult(name, False, f"raised {type(e).__name__}: {e}")
        result.seconds = time.time() - t0
        results.append(result)
        if verbose:
            mark = "✓" if result.passed else "❌"
            print(f"[{i}/{len(names)}] {mark} {name:<22} {result.detail}  ({result.seconds:.1f}s)")

    passed = all(r.passed for r in results)
    if verbose:
        print("-" * 70)
        print(f"{sum(r.passed for r in results)}/{len(results)} checks passed "
              f"in {time.time() - start:.1f} seconds")
        print("=" * 70)
    return passed, results
