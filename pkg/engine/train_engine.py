"""
Training Engine
===============
Mini-batches of `batch` clips, gradients accumulated over `accum` batches per
optimizer step, AdamW under the one-cycle schedule, soft-winsorized targets
(training-split statistics), and early stopping on validation macro Spearman.

Output (under <out>):
  checkpoints/<run_name>_best.ckpt     best validation epoch
  checkpoints/<run_name>_last.ckpt     most recent epoch (resume point)
  history/<run_name>_*.csv             EpochTracker telemetry
  <run_name>_diagnostics.json          written only when training aborts
"""

import math
import time
from collections import OrderedDict
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from analytics.metrics import MetricReport, macro_report
from analytics.report import write_json
from data.metadata_reader import SCORE_KEYS
from engine.epoch_tracker import EpochTracker
from losses.balancer import AdaptiveLossBalancer
from losses.objectives import (LossConfig, corr_boost_loss, cov_align_loss, head_regularization,
                               huber_loss, mse_loss)
from losses.winsorize import TargetStatistics, winsorize_targets
from model.checkpoint import (generator_state, load_model, restore_generator, restore_optimizer,
                              save_model)
from model.config import FeatureBundle
from model.crmf import CrmfModel, StageError
from model.routing import load_balance_loss, routing_entropy_loss
from tensorcore import NonFiniteError, Tensor, backward
from tensorcore.optim import AdamW
from utils.config import ResolvedConfig

BALANCER_PARAM = "balancer.alpha"


class TrainingAborted(RuntimeError):
    """Non-finite loss; a diagnostics dump has been written."""

    def __init__(self, message: str, dump_path: Optional[Path] = None):
        self.dump_path = dump_path
        super().__init__(message)


class EarlyStopping:
    """Counts epochs without strict improvement of a higher-is-better score."""

    def __init__(self, patience: int = 5):
        self.patience = patience
        self.best = -math.inf
        self.bad_epochs = 0

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience

    @property
    def patience_left(self) -> int:
        return self.patience - self.bad_epochs

    def update(self, score: float) -> bool:
        if np.isfinite(score) and score > self.best:
            self.best = float(score)
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    def state_dict(self) -> dict:
        return {"patience": self.patience, "best": self.best, "bad_epochs": self.bad_epochs}

    def load_state_dict(self, state: dict):
        self.patience = int(state["patience"])
        self.best = float(state["best"])
        self.bad_epochs = int(state["bad_epochs"])


# -------------------------------------------------
# LOSS ASSEMBLY
# -------------------------------------------------
def active_components(model: CrmfModel, loss_cfg: LossConfig) -> Tuple[str, ...]:
    """
    Loss components that carry signal for this architecture.

    Routing terms are dropped when the router has nothing to learn (uniform
    routing or a single geometry) and the adapter penalty when the head is
    linear; a structurally constant component would otherwise take the
    inverse-variance weight for itself.
    """
    if loss_cfg.mode == "mse":
        return ("mse",)
    names = ["huber", "corr", "cov"]
    if not model.router.logits_free():
        names += ["entropy", "balance"]
    if model.adapter_weights():
        names.append("headreg")
    return tuple(names)


def compute_losses(y_hat: Tensor, r: Tensor, y: np.ndarray, model: CrmfModel,
                   loss_cfg: LossConfig, names: Sequence[str]) -> "OrderedDict[str, Tensor]":
    builders = {
        "mse": lambda: mse_loss(y_hat, y),
        "huber": lambda: huber_loss(y_hat, y, loss_cfg.delta),
        "corr": lambda: corr_boost_loss(y_hat, y, loss_cfg.lambda_corr, loss_cfg.eps),
        "cov": lambda: cov_align_loss(y_hat, y, loss_cfg.lambda_cov),
        "entropy": lambda: routing_entropy_loss(r, loss_cfg.lambda_ent),
        "balance": lambda: load_balance_loss(r, loss_cfg.lambda_bal),
        "headreg": lambda: head_regularization(model.adapter_weights(), loss_cfg.head_reg),
    }
    return OrderedDict((n, builders[n]()) for n in names)


def make_batches(n: int, batch: int, rng: np.random.Generator) -> List[np.ndarray]:
    """Shuffled index batches; a trailing single row joins the previous batch."""
    order = rng.permutation(n)
    batches = [order[i:i + batch] for i in range(0, n, batch)]
    if len(batches) > 1 and len(batches[-1]) < 2:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


def targets_of(bundles: Sequence[FeatureBundle]) -> np.ndarray:
    missing = [b.clip_id for b in bundles if b.y is None]
    if missing:
        raise ValueError(f"Clips without targets: {missing[:5]}")
    return np.stack([np.asarray(b.y, dtype=np.float64) for b in bundles])


# -------------------------------------------------
# ENGINE
# -------------------------------------------------
class TrainEngine:
    """
    Args:
        config: resolved run/model/loss configuration
        train: training bundles (targets required)
        val: validation bundles (targets required, at least 2)
        out_dir: output root
        run_name: file stem for checkpoints and history
        target_names: target column names
    """

    def __init__(self, config: ResolvedConfig, train: Sequence[FeatureBundle],
                 val: Sequence[FeatureBundle], out_dir, run_name: Optional[str] = None,
                 target_names: Sequence[str] = SCORE_KEYS):
        if len(train) < 2:
            raise ValueError(f"Training split needs at least 2 clips, got {len(train)}")
        if len(val) < 2:
            raise ValueError(f"Validation split needs at least 2 clips, got {len(val)}")
        self.config = config
        self.run = config.run
        self.loss_cfg = config.loss
        self.train = list(train)
        self.val = list(val)
        self.target_names = list(target_names)
        self.out_dir = Path(out_dir)
        self.run_name = run_name or self.default_run_name()

        y_train = targets_of(self.train)
        if y_train.shape[1] != config.model.n_targets:
            raise ValueError(f"Targets have {y_train.shape[1]} columns, model predicts "
                             f"{config.model.n_targets}")
        self.stats = TargetStatistics.fit(y_train, self.target_names)
        self.y_train = winsorize_targets(y_train, self.stats, self.loss_cfg.winsor_theta,
                                         self.loss_cfg.winsor_scale)
        self.y_val = targets_of(self.val)

        self.model = CrmfModel(config.model, seed=self.run.seed)
        self.components = active_components(self.model, self.loss_cfg)
        self.balancer = None
        if self.loss_cfg.mode != "mse":
            adaptive = self.loss_cfg.mode == "adaptive"
            self.balancer = AdaptiveLossBalancer(self.components, self.loss_cfg.ema_decay,
                                                 self.loss_cfg.mix if adaptive else 1.0,
                                                 self.loss_cfg.eps, learn_logits=adaptive)

        self.params = OrderedDict(self.model.store.items())
        if self.balancer is not None and self.balancer.learn_logits:
            self.params[BALANCER_PARAM] = self.balancer.alpha
        self.optimizer = AdamW(self.params, self.run.peak_lr, self.total_steps,
                               self.run.weight_decay)

        self.shuffle_rng = np.random.default_rng(self.run.seed + 1)
        self.dropout_rng = np.random.default_rng(self.run.seed + 2)
        self.stopper = EarlyStopping(self.run.patience)
        self.epoch = 0
        self.tracker = EpochTracker(self.run_name, self.out_dir)
        self.last_loss: Optional[float] = None

    def default_run_name(self) -> str:
        m = self.config.model
        return f"crmf_{m.geometry.replace('+', '-')}_{m.routing}_{self.loss_cfg.mode}_seed{self.run.seed}"

    @property
    def batches_per_epoch(self) -> int:
        n, b = len(self.train), self.run.batch
        count = math.ceil(n / b)
        return count - 1 if count > 1 and n % b == 1 else count

    @property
    def steps_per_epoch(self) -> int:
        return math.ceil(self.batches_per_epoch / self.run.accum)

    @property
    def total_steps(self) -> int:
        return self.steps_per_epoch * self.run.epochs

    @property
    def checkpoint_dir(self) -> Path:
        return self.out_dir / "checkpoints"

    # -------------------------------------------------
    # STEP
    # -------------------------------------------------
    def step(self, micro_batches: Sequence[np.ndarray]) -> Dict:
        """
        One optimizer step over `micro_batches` (index arrays into the train split).

        Returns:
            dict with total loss, mean component values, β and forward diagnostics
        """
        grads = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        component_sums = OrderedDict((n, 0.0) for n in self.components)
        total_sum, beta, diagnostics = 0.0, None, {}
        count = len(micro_batches)
        lr = self.optimizer.current_lr()

        for idx in micro_batches:
            bundles = [self.train[i] for i in idx]
            try:
                y_hat, r, diagnostics = self.model.forward(bundles, self.dropout_rng)
                losses = compute_losses(y_hat, r, self.y_train[idx], self.model,
                                        self.loss_cfg, self.components)
                if self.balancer is None:
                    total = losses["mse"]
                else:
                    total, beta = self.balancer.combine(losses)
            except (NonFiniteError, StageError) as e:
                raise self.abort(f"forward failed: {e}", diagnostics, bundles)

            value = float(total.data)
            if not np.isfinite(value):
                raise self.abort(f"non-finite loss {value}", diagnostics, bundles)
            by_tensor = backward(total * (1.0 / count), params=list(self.params.values()),
                                 accumulate=False)
            for name, p in self.params.items():
                grads[name] += by_tensor[p]
            total_sum += value
            for n, t in losses.items():
                component_sums[n] += float(t.data)

        means = OrderedDict((n, v / count) for n, v in component_sums.items())
        applied = self.optimizer.step(grads)
        if not applied:
            self.tracker.add_issue("adamw_step", "WARNING", "non-finite gradient, step skipped",
                                   STEP=self.optimizer.state.step)
        if self.balancer is not None:
            self.balancer.update(means)

        result = {"loss": total_sum / count, "components": means, "lr": lr,
                  "beta": None if beta is None else dict(zip(self.components, beta.tolist())),
                  "diagnostics": diagnostics, "applied": applied}
        self.last_loss = result["loss"]
        self.tracker.record_step(self.optimizer.state.step, lr, means, result["beta"],
                                 diagnostics, result["loss"])
        return result

    def abort(self, message: str, diagnostics: Dict, bundles) -> TrainingAborted:
        """Write the diagnostics dump and build the exception to raise."""
        dump = self.out_dir / f"{self.run_name}_diagnostics.json"
        norms = {name: float(np.linalg.norm(p.data)) for name, p in self.params.items()}
        write_json(dump, {
            "message": message,
            "epoch": self.epoch,
            "optimizer_step": self.optimizer.state.step,
            "clips": [b.clip_id for b in bundles],
            "last_step": self.tracker.last_step(),
            "forward_diagnostics": diagnostics,
            "parameter_norms": norms,
            "balancer": None if self.balancer is None else self.balancer.state_dict(),
            "config": self.config.to_dict(),
        })
        self.tracker.add_issue("train_step", "ERROR", message)
        self.tracker.save()
        print(f"❌ Training aborted: {message}")
        print(f"   Diagnostics → {dump}")
        return TrainingAborted(message, dump)

    # -------------------------------------------------
    # EPOCHS
    # -------------------------------------------------
    def train_epoch(self) -> float:
        self.epoch += 1
        self.tracker.new_epoch(self.epoch)
        batches = make_batches(len(self.train), self.run.batch, self.shuffle_rng)
        losses = []
        for start in range(0, len(batches), self.run.accum):
            losses.append(self.step(batches[start:start + self.run.accum])["loss"])
        return float(np.mean(losses))

    def evaluate(self, bundles: Optional[Sequence[FeatureBundle]] = None) -> MetricReport:
        """Eval-mode metrics against raw (un-winsorized) targets."""
        bundles = self.val if bundles is None else list(bundles)
        y = self.y_val if bundles is self.val else targets_of(bundles)
        y_hat = self.model.predict(bundles, batch_size=max(self.run.batch, 16))
        return macro_report(y_hat, y, self.target_names)

    def fit(self, verbose: bool = True) -> Dict:
        """Train until `epochs` or early stop; returns a summary."""
        start = time.time()
        if verbose:
            print("=" * 70)
            print(f"TRAINING {self.run_name}")
            print("=" * 70)
            print(f"Train clips: {len(self.train)} | Val clips: {len(self.val)} | "
                  f"effective batch {self.run.effective_batch} | "
                  f"{self.steps_per_epoch} steps/epoch | {self.model.store.num_values():,} weights")
            print(f"Loss components: {', '.join(self.components)}")

        best_path = self.checkpoint_dir / f"{self.run_name}_best.ckpt"
        last_path = self.checkpoint_dir / f"{self.run_name}_last.ckpt"
        while self.epoch < self.run.epochs and not self.stopper.should_stop:
            train_loss = self.train_epoch()
            report = self.evaluate()
            score = report.macro["spearman"]
            improved = self.stopper.update(score)
            if improved:
                self.save(best_path)
            self.save(last_path)
            self.tracker.record_epoch(train_loss, score, self.stopper.best,
                                      self.stopper.patience_left, self.optimizer.state.skipped)
            if verbose:
                mark = "✓ best" if improved else f"patience {self.stopper.patience_left}"
                print(f"[{self.epoch}/{self.run.epochs}] loss={train_loss:.5f} "
                      f"val ρ={score:.4f} lr={self.optimizer.current_lr():.2e} {mark}")

        self.tracker.save()
        elapsed = time.time() - start
        if verbose:
            if self.stopper.should_stop:
                print(f"⚠️  Early stop after {self.epoch} epochs "
                      f"({self.run.patience} without improvement)")
            print(f"Best val macro Spearman: {self.stopper.best:.4f}")
            print(f"Runtime: {elapsed:.1f} seconds")
            print("=" * 70)
        return {"run_name": self.run_name, "epochs": self.epoch,
                "best_val_spearman": self.stopper.best, "early_stopped": self.stopper.should_stop,
                "skipped_steps": self.optimizer.state.skipped, "best_checkpoint": str(best_path),
                "last_checkpoint": str(last_path)}

    # -------------------------------------------------
    # CHECKPOINTS
    # -------------------------------------------------
    def save(self, path) -> Path:
        header = {
            "config": self.config.to_dict(),
            "run_name": self.run_name,
            "epoch": self.epoch,
            "components": list(self.components),
            "balancer": None if self.balancer is None else self.balancer.state_dict(),
            "early_stopping": self.stopper.state_dict(),
            "shuffle_rng": generator_state(self.shuffle_rng),
            "dropout_rng": generator_state(self.dropout_rng),
            "target_statistics": self.stats.to_dict(),
        }
        return save_model(path, self.model, self.optimizer, header)

    @classmethod
    def resume(cls, path, config: ResolvedConfig, train: Sequence[FeatureBundle],
               val: Sequence[FeatureBundle], out_dir,
               target_names: Sequence[str] = SCORE_KEYS) -> "TrainEngine":
        """Rebuild an engine from a checkpoint written by `save`."""
        model, header, m, v = load_model(path)
        engine = cls(config, train, val, out_dir, header.get("run_name"), target_names)
        if model.config != engine.model.config:
            raise ValueError(f"{path}: checkpoint model config differs from the run config")
        engine.model.store.load_arrays(model.store.state_arrays())
        if list(header["components"]) != list(engine.components):
            raise ValueError(f"{path}: loss components {header['components']} != "
                             f"{list(engine.components)}")
        if engine.balancer is not None:
            engine.balancer.load_state_dict(header["balancer"])
        restore_optimizer(engine.optimizer, header, m, v)
        engine.stopper.load_state_dict(header["early_stopping"])
        engine.shuffle_rng = restore_generator(header["shuffle_rng"])
        engine.dropout_rng = restore_generator(header["dropout_rng"])
        engine.epoch = int(header["epoch"])
        return engine
