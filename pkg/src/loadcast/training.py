"""Seeded MSE training with plateau LR reduction and early stopping.

Epoch-end callback order is fixed: the plateau check runs first, then
the early-stop check, both driven by the same improvement rule (the
validation loss must fall by more than the configured threshold).
Weights are restored to the best-validation epoch after training ends,
whether it ended by early stop or by exhausting the epoch budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceDetected, InvalidConfig
from .neural.models import Model, ModelSpec
from .sequences import SplitCorpus


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 100
    early_stop_patience: int = 5
    plateau_patience: int = 3
    plateau_factor: float = 0.5
    min_lr: float = 1e-5
    improvement_threshold: float = 1e-7
    optimizer: str = "adam"
    learning_rate: float = 0.004337
    seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size <= 0 or self.max_epochs <= 0:
            raise InvalidConfig("batch_size and max_epochs must be positive")
        if not 0.0 < self.plateau_factor < 1.0:
            raise InvalidConfig("plateau_factor must lie in (0, 1)")
        if self.min_lr <= 0.0:
            raise InvalidConfig("min_lr must be positive")
        if self.optimizer not in ("adam", "rmsprop"):
            raise InvalidConfig(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainLog:
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    lr_schedule: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0
    restored: bool = False

    @property
    def best_val_loss(self) -> float:
        return min(self.val_losses)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient with respect to pred."""
    residual = pred - target
    loss = float(np.mean(residual**2))
    return loss, 2.0 * residual / len(pred)


class Adam:
    """First/second-moment optimiser with bias correction."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8) -> None:
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, named_parameters) -> None:
        self.t += 1
        for name, param, grad in named_parameters:
            if name not in self.m:
                self.m[name] = np.zeros_like(param)
                self.v[name] = np.zeros_like(param)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad**2
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class RMSprop:
    """Running mean-square accumulator: s = rho*s + (1-rho)*g^2,
    update lr * g / (sqrt(s) + eps)."""

    def __init__(self, lr: float, rho: float = 0.9, eps: float = 1e-8) -> None:
        self.lr = lr
        self.rho = rho
        self.eps = eps
        self.s: dict[str, np.ndarray] = {}

    def step(self, named_parameters) -> None:
        for name, param, grad in named_parameters:
            if name not in self.s:
                self.s[name] = np.zeros_like(param)
            s = self.s[name]
            s *= self.rho
            s += (1.0 - self.rho) * grad**2
            param -= self.lr * grad / (np.sqrt(s) + self.eps)


def make_optimizer(name: str, lr: float):
    if name == "adam":
        return Adam(lr)
    if name == "rmsprop":
        return RMSprop(lr)
    raise InvalidConfig(f"unknown optimizer {name!r}")


class CallbackState:
    """Plateau LR halving and early stopping over a validation series.

    observe() is called once per epoch (1-based) with that epoch's
    validation loss and returns (lr for the next epoch, stop flag,
    improved flag). An epoch improves when its loss undercuts the best
    seen by more than the threshold; both patience counters reset on
    improvement, and the plateau counter also resets after a reduction.
    """

    def __init__(self, initial_lr: float, plateau_patience: int, plateau_factor: float,
                 min_lr: float, early_stop_patience: int, threshold: float) -> None:
        self.lr = initial_lr
        self.plateau_patience = plateau_patience
        self.plateau_factor = plateau_factor
        self.min_lr = min_lr
        self.early_stop_patience = early_stop_patience
        self.threshold = threshold
        self.best_loss = np.inf
        self.best_epoch = 0
        self.plateau_wait = 0
        self.stop_wait = 0

    def observe(self, epoch: int, val_loss: float) -> tuple[float, bool, bool]:
        improved = val_loss < self.best_loss - self.threshold
        if improved:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.plateau_wait = 0
            self.stop_wait = 0
        else:
            self.plateau_wait += 1
            self.stop_wait += 1
        if self.plateau_wait >= self.plateau_patience:
            self.lr = max(self.lr * self.plateau_factor, self.min_lr)
            self.plateau_wait = 0
        stop = self.stop_wait >= self.early_stop_patience
        return self.lr, stop, improved


def evaluate_loss(model: Model, h: np.ndarray, v: np.ndarray, y: np.ndarray,
                  batch_size: int = 4096) -> float:
    preds = model.predict(h, v, batch_size=batch_size)
    return float(np.mean((preds - y) ** 2))


def fit(spec: ModelSpec, corpus: SplitCorpus, cfg: TrainConfig) -> tuple[Model, TrainLog]:
    """Train one model on the split corpus under the given protocol.

    Fully deterministic for fixed (spec, corpus, cfg): the seed drives
    parameter initialisation, dropout, and per-epoch batch shuffling.
    """
    streams = np.random.SeedSequence(cfg.seed).generate_state(2)
    model = Model(spec, seed=int(streams[0]))
    shuffle_rng = np.random.default_rng(int(streams[1]))
    optimizer = make_optimizer(cfg.optimizer, cfg.learning_rate)
    callbacks = CallbackState(
        initial_lr=cfg.learning_rate,
        plateau_patience=cfg.plateau_patience,
        plateau_factor=cfg.plateau_factor,
        min_lr=cfg.min_lr,
        early_stop_patience=cfg.early_stop_patience,
        threshold=cfg.improvement_threshold,
    )

    train = corpus.train
    log = TrainLog()
    best_state = model.state_dict()
    count = len(train)

    for epoch in range(1, cfg.max_epochs + 1):
        log.lr_schedule.append(optimizer.lr)
        order = shuffle_rng.permutation(count)
        loss_sum = 0.0
        for start in range(0, count, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            preds = model.forward(train.h[batch], train.v[batch], training=True)
            loss, dpred = mse_loss(preds, train.y[batch])
            if not np.isfinite(loss):
                raise DivergenceDetected(f"epoch {epoch}: non-finite training loss")
            model.zero_grads()
            model.backward(dpred)
            optimizer.step(model.named_parameters())
            loss_sum += loss * len(batch)
        train_loss = loss_sum / count
        val_loss = evaluate_loss(model, corpus.validation.h, corpus.validation.v,
                                 corpus.validation.y)
        if not np.isfinite(val_loss):
            raise DivergenceDetected(f"epoch {epoch}: non-finite validation loss")
        log.train_losses.append(train_loss)
        log.val_losses.append(val_loss)

        next_lr, stop, improved = callbacks.observe(epoch, val_loss)
        if improved:
            best_state = model.state_dict()
        optimizer.lr = next_lr
        log.stopped_epoch = epoch
        if stop:
            break

    log.best_epoch = callbacks.best_epoch
    log.restored = log.best_epoch != log.stopped_epoch
    model.load_state_dict(best_state)
    return model, log


def write_train_log_csv(path, log: TrainLog) -> None:
    import csv
    from pathlib import Path

    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["epoch", "train_loss", "val_loss", "lr"])
        for idx, (tr, va, lr) in enumerate(
            zip(log.train_losses, log.val_losses, log.lr_schedule), start=1
        ):
            writer.writerow([idx, repr(tr), repr(va), repr(lr)])
        writer.writerow(["best_epoch", log.best_epoch, "stopped_epoch", log.stopped_epoch])
