"""
MNL Solver
==========
min_Θ  -α ℒ(Θ) + λ ‖L^{1/2} Θ‖_*

solved by proximal gradient in Φ = L^{1/2} Θ (restricted to the range of L),
Barzilai-Borwein steps with backtracking, and singular value thresholding.
Internally the objective is multiplied by n/α, which leaves the minimiser
unchanged and makes the curvature independent of the record count.
"""

from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from labeling.comparisons_reader import ComparisonRecord
from labeling.graph import center_per_component, graph_laplacian, laplacian_half
from labeling.mnl import expand_records, mnl_loglik, mnl_loglik_and_grad, validate_records
from tensorcore.linalg import svd

LAMBDA_GRID = (1e-4, 1e-3, 1e-2, 1e-1)


@dataclass
class SolverConfig:
    alpha: float = 1.0
    lam: float = 1e-4
    max_iter: int = 500
    tol: float = 1e-8
    step_min: float = 1e-6
    step_max: float = 1e2
    init_step: float = 1.0
    max_backtracks: int = 40

    @classmethod
    def from_dict(cls, values: dict, base: Optional["SolverConfig"] = None) -> "SolverConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValueError(f"Unknown solver config keys: {unknown}")
        merged = asdict(base or cls())
        merged.update(values)
        return cls(**merged).validate()

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self):
        if self.lam < 0:
            raise ValueError(f"nuclear-norm weight must be >= 0, got {self.lam}")
        if self.alpha <= 0:
            raise ValueError(f"likelihood scale alpha must be positive, got {self.alpha}")
        if not 0 < self.step_min <= self.step_max:
            raise ValueError(f"invalid step bounds [{self.step_min}, {self.step_max}]")
        return self


@dataclass
class MnlFit:
    theta: np.ndarray
    objective: List[float]
    iterations: int
    converged: bool
    loglik: float
    labels: np.ndarray
    flagged_items: List[int] = field(default_factory=list)
    config: Dict = field(default_factory=dict)


def svt_prox(M, threshold: float) -> np.ndarray:
    """Proximal operator of threshold·‖·‖_*: U max(σ - threshold, 0) V^T."""
    if threshold < 0:
        raise ValueError(f"svt_prox: threshold must be >= 0, got {threshold}")
    U, s, V = svd(M)
    return (U * np.maximum(s - threshold, 0.0)) @ V.T


def nuclear_norm(M) -> float:
    return float(svd(M)[1].sum())


def bb_step(s, g_delta, previous: float, step_min: float = 1e-6, step_max: float = 1e2) -> float:
    """BB1 step <s,s>/<s,Δg>, clipped; the previous step when <s,Δg> <= 0."""
    s = np.asarray(s, dtype=np.float64).ravel()
    g_delta = np.asarray(g_delta, dtype=np.float64).ravel()
    sy = float(s @ g_delta)
    if sy <= 0.0 or not np.isfinite(sy):
        return previous
    return float(np.clip((s @ s) / sy, step_min, step_max))


def fit_mnl(records: Sequence[ComparisonRecord], n_items: int, n_targets: int,
            config: Optional[SolverConfig] = None, verbose: bool = False) -> MnlFit:
    """
    Fit per-target utilities from pairwise records.

    Items in connected components of fewer than 2 items stay at 0 and are
    reported in `flagged_items`.
    """
    cfg = (config or SolverConfig()).validate()
    data = expand_records(records)
    validate_records(data, n_items, n_targets)
    graph = graph_laplacian(records, n_items)
    _, pinv_root, _ = laplacian_half(graph.laplacian, graph.labels)

    n, alpha = data.n, cfg.alpha
    penalty = n * cfg.lam / alpha

    def smooth(phi):
        theta = pinv_root @ phi
        value, grad = mnl_loglik_and_grad(data, theta)
        return -n * value, -n * (pinv_root @ grad), theta

    def objective(phi, smooth_value):
        return smooth_value + penalty * nuclear_norm(phi) if penalty else smooth_value

    phi = np.zeros((n_items, n_targets))
    f_val, grad, _ = smooth(phi)
    F = objective(phi, f_val)
    history = [F * alpha / n]
    step = cfg.init_step
    converged = False
    iterations = 0

    for iterations in range(1, cfg.max_iter + 1):
        accepted = False
        for _ in range(cfg.max_backtracks):
            candidate = svt_prox(phi - step * grad, step * penalty) if penalty \
                else phi - step * grad
            f_new, grad_new, _ = smooth(candidate)
            F_new = objective(candidate, f_new)
            if F_new <= F:
                accepted = True
                break
            step /= 2.0
        if not accepted:
            if verbose:
                print(f"  ⚠️  backtracking exhausted at iteration {iterations}")
            break

        change = abs(F - F_new) / max(abs(F), 1e-30)
        s, g_delta = candidate - phi, grad_new - grad
        phi, grad, F = candidate, grad_new, F_new
        history.append(F * alpha / n)
        if verbose and iterations % 50 == 0:
            print(f"  [{iterations}/{cfg.max_iter}] objective={history[-1]:.8f}  step={step:.3g}")
        if change < cfg.tol:
            converged = True
            break
        step = bb_step(s, g_delta, step, cfg.step_min, cfg.step_max)

    theta = center_per_component(pinv_root @ phi, graph.labels)
    sizes = np.bincount(graph.labels)
    flagged = [int(i) for i in np.flatnonzero(sizes[graph.labels] < 2)]
    theta[flagged] = 0.0
    return MnlFit(theta=theta, objective=history, iterations=iterations, converged=converged,
                  loglik=mnl_loglik(data, theta), labels=graph.labels,
                  flagged_items=flagged, config=cfg.to_dict())


def select_lambda(records: Sequence[ComparisonRecord], n_items: int, n_targets: int,
                  grid: Sequence[float] = LAMBDA_GRID, holdout: float = 0.2, seed: int = 0,
                  config: Optional[SolverConfig] = None) -> Tuple[float, Dict[float, float]]:
    """
    Choose λ by mean held-out log-likelihood.

    Returns:
        (best λ, {λ: held-out log-likelihood})
    """
    if not 0.0 < holdout < 1.0:
        raise ValueError(f"holdout fraction must lie in (0, 1), got {holdout}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(records))
    n_test = max(1, int(round(holdout * len(records))))
    test = [records[i] for i in order[:n_test]]
    train = [records[i] for i in order[n_test:]]
    test_data = expand_records(test)

    base = config or SolverConfig()
    scores = {}
    for i, lam in enumerate(grid, start=1):
        cfg = SolverConfig.from_dict({"lam": float(lam)}, base)
        fit = fit_mnl(train, n_items, n_targets, cfg)
        scores[float(lam)] = mnl_loglik(test_data, fit.theta)
        print(f"  [{i}/{len(grid)}] λ={lam:g}  held-out loglik={scores[float(lam)]:.6f}")
    best = max(scores, key=lambda k: (scores[k], -k))
    return best, scores
