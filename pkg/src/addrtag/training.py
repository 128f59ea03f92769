"""Optimization harness: SGD with teacher forcing, plateau LR decay, early stopping, multi-seed runs."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import torch

from .adversarial import adann_pairing, adversarial_batch_loss, constant_lambda
from .checkpoint import Checkpoint
from .core import AddressSample
from .data import Batch, group_by_country, make_batches
from .embeddings import EmbeddingProvider
from .errors import NonFiniteLoss, TooFewDomains
from .tagger import AddressTagger, ModelConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 0  # 0 -> 512, or 256 for adversarial models
    lr: float = 0.1
    lr_decay_factor: float = 0.1
    lr_patience: int = 10
    early_stop_patience: int = 15
    seeds: tuple[int, ...] = (5, 10, 15, 20, 25)
    retry_seed: int = 30
    optimizer: str = "sgd"
    loss: str = "cross_entropy"
    grl_lambda: float = 1.0
    nonconvergence_threshold: float = 0.80
    improvement_tol: float = 1e-6

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 0 or self.lr_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("epoch, batch and patience counts must be positive")
        if not self.lr > 0 or not 0 < self.lr_decay_factor <= 1:
            raise ValueError("lr must be > 0 and the decay factor in (0, 1]")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be a non-empty set of distinct integers")
        if self.optimizer != "sgd" or self.loss != "cross_entropy":
            raise ValueError("only sgd / cross_entropy are supported")
        if self.grl_lambda < 0:
            raise ValueError("grl_lambda must be non-negative")

    def resolved_batch_size(self, adversarial: bool) -> int:
        return self.batch_size or (256 if adversarial else 512)

    def to_dict(self) -> dict:
        return asdict(self)


def config_hash(*configs) -> str:
    blob = json.dumps([c.to_dict() for c in configs], sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# schedules


@dataclass
class PlateauState:
    lr: float
    factor: float = 0.1
    patience: int = 10
    tol: float = 1e-6
    best: float = math.inf
    bad_epochs: int = 0


def lr_schedule_step(state: PlateauState, epoch_val_loss: float) -> float:
    """Multiply the rate by ``factor`` after ``patience`` epochs without improvement."""
    if epoch_val_loss < state.best - state.tol:
        state.best = epoch_val_loss
        state.bad_epochs = 0
    else:
        state.bad_epochs += 1
        if state.bad_epochs >= state.patience:
            state.lr *= state.factor
            state.bad_epochs = 0
    return state.lr


@dataclass
class EarlyStopping:
    patience: int = 15
    tol: float = 1e-6
    best: float = math.inf
    best_epoch: int = 0
    bad_epochs: int = 0

    def step(self, epoch: int, val_loss: float) -> bool:
        """Record an epoch; True when it is a new best."""
        if val_loss < self.best - self.tol:
            self.best, self.best_epoch, self.bad_epochs = val_loss, epoch, 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


# ---------------------------------------------------------------------------
# logs


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    lr: float
    seconds: float
    domain_loss: float | None = None


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    @property
    def best_val_loss(self) -> float:
        return min(r.val_loss for r in self.records)

    @property
    def best_val_accuracy(self) -> float:
        return max(r.val_accuracy for r in self.records)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(r)) + "\n" for r in self.records)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def read(cls, path) -> TrainLog:
        with open(path, encoding="utf-8") as fh:
            records = [EpochRecord(**json.loads(line)) for line in fh if line.strip()]
        best = min(records, key=lambda r: r.val_loss).epoch if records else 0
        return cls(records, best_epoch=best)


def detect_nonconvergence(log: TrainLog, threshold: float = 0.80) -> bool:
    if not log.records:
        raise ValueError("empty training log")
    return log.best_val_accuracy < threshold


# ---------------------------------------------------------------------------
# evaluation helpers used during training


@torch.no_grad()
def evaluate_loss_accuracy(model: AddressTagger, provider: EmbeddingProvider, batches: Sequence[Batch]) -> tuple[float, float]:
    """Teacher-forced loss and greedy token accuracy, both token-weighted."""
    was_training = model.training
    model.eval()
    loss_sum = correct = total = 0.0
    for b in batches:
        x, lengths = model.embed_batch(provider, b)
        gold = torch.as_tensor(b.tag_matrix)
        mask = torch.as_tensor(b.mask)
        enc = model.encode(x, lengths)
        n = int(mask.sum())
        loss_sum += float(model.loss(model.decode(enc, gold, teacher_forcing=True), gold, mask)) * n
        pred = model.decode(enc).argmax(dim=-1)
        correct += float((pred[mask] == gold[mask]).sum())
        total += n
    model.train(was_training)
    return loss_sum / total, correct / total


def _check_finite(loss: torch.Tensor, epoch: int, step: int) -> None:
    if not torch.isfinite(loss):
        raise NonFiniteLoss(f"loss became {float(loss)} at epoch {epoch}, step {step}")


def _epoch_seed(seed: int, epoch: int, salt: int = 0) -> int:
    return int(np.random.SeedSequence([seed, epoch, salt]).generate_state(1)[0])


def _plain_epoch(model, provider, optimizer, samples, batch_size, seed, epoch) -> tuple[float, None]:
    total = 0.0
    count = 0
    for step, b in enumerate(make_batches(samples, batch_size, shuffle_seed=_epoch_seed(seed, epoch))):
        optimizer.zero_grad()
        x, lengths = model.embed_batch(provider, b)
        gold = torch.as_tensor(b.tag_matrix)
        logits = model(x, lengths, gold=gold, teacher_forcing=True)
        loss = model.loss(logits, gold, torch.as_tensor(b.mask))
        _check_finite(loss, epoch, step)
        loss.backward()
        optimizer.step()
        total += loss.item() * len(b)
        count += len(b)
    return total / count, None


def _adann_epoch(model, provider, optimizer, by_country, batch_size, seed, epoch, lambd) -> tuple[float, float]:
    """Sweeps over the domains until every country's batches have served once as source."""
    countries = sorted(by_country)
    pending = {
        c: make_batches(by_country[c], batch_size, shuffle_seed=_epoch_seed(seed, epoch, k + 1))
        for k, c in enumerate(countries)
    }
    targets = {c: list(batches) for c, batches in pending.items()}
    target_pos = dict.fromkeys(countries, 0)
    task_sum = domain_sum = 0.0
    count = step = sweep = 0
    while any(pending.values()):
        for pair in adann_pairing(countries, _epoch_seed(seed, epoch, 10_000 + sweep)):
            if not pending[pair.source]:
                continue
            source = pending[pair.source].pop(0)
            pool = targets[pair.target]
            target = pool[target_pos[pair.target] % len(pool)]
            target_pos[pair.target] += 1
            optimizer.zero_grad()
            losses = adversarial_batch_loss(model, provider, source, target, lambd(epoch, step))
            total = losses.total
            _check_finite(total, epoch, step)
            total.backward()
            optimizer.step()
            task_sum += losses.task.item() * len(source)
            domain_sum += (losses.domain_source + losses.domain_target).item() * len(source)
            count += len(source)
            step += 1
        sweep += 1
    return task_sum / count, domain_sum / count


def train(
    config: TrainConfig,
    model_config: ModelConfig,
    provider: EmbeddingProvider,
    train_data: Sequence[AddressSample],
    val_data: Sequence[AddressSample],
    seed: int,
    lambda_schedule: Callable[[int, int], float] | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[Checkpoint, TrainLog]:
    """Train one model; returns the best-validation-loss checkpoint and the epoch log."""
    if not train_data or not val_data:
        raise ValueError("training and validation sets must be non-empty")
    torch.manual_seed(seed)
    model = AddressTagger(model_config, seed=seed)
    model.bind(provider)
    model.train()
    optimizer = torch.optim.SGD(model.parameters(), lr=config.lr)
    batch_size = config.resolved_batch_size(model_config.adversarial)
    val_batches = make_batches(val_data, batch_size)
    by_country = None
    if model_config.adversarial:
        by_country = group_by_country(train_data)
        if len(by_country) < 2:
            raise TooFewDomains("adversarial training needs samples from at least 2 countries")
    lambd = lambda_schedule or constant_lambda(config.grl_lambda)

    schedule = PlateauState(config.lr, config.lr_decay_factor, config.lr_patience, config.improvement_tol)
    stopper = EarlyStopping(config.early_stop_patience, config.improvement_tol)
    log = TrainLog()
    best_state = None
    for epoch in range(1, config.epochs + 1):
        start = time.perf_counter()
        lr = schedule.lr
        for group in optimizer.param_groups:
            group["lr"] = lr
        if by_country is None:
            train_loss, domain_loss = _plain_epoch(model, provider, optimizer, train_data, batch_size, seed, epoch)
        else:
            train_loss, domain_loss = _adann_epoch(model, provider, optimizer, by_country, batch_size, seed, epoch, lambd)
        val_loss, val_acc = evaluate_loss_accuracy(model, provider, val_batches)
        if not math.isfinite(val_loss):
            raise NonFiniteLoss(f"validation loss became {val_loss} at epoch {epoch}")
        if stopper.step(epoch, val_loss):
            best_state = copy.deepcopy(model.state_dict())
        lr_schedule_step(schedule, val_loss)
        record = EpochRecord(epoch, train_loss, val_loss, val_acc, lr, time.perf_counter() - start, domain_loss)
        log.records.append(record)
        if on_epoch:
            on_epoch(record)
        if stopper.should_stop:
            log.stopped_early = True
            break
    log.best_epoch = stopper.best_epoch
    model.load_state_dict(best_state)
    ckpt = Checkpoint.from_model(
        model,
        seed=seed,
        epoch=stopper.best_epoch,
        best_val_loss=float(stopper.best),
        config_hash=config_hash(config, model_config),
        **{f"train.{k}": v for k, v in config.to_dict().items()},
    )
    return ckpt, log


@dataclass
class SeedRun:
    seed: int
    checkpoint: Checkpoint
    log: TrainLog
    requested_seed: int
    converged: bool

    @property
    def substituted(self) -> bool:
        return self.seed != self.requested_seed


def multi_seed_run(
    config: TrainConfig,
    model_config: ModelConfig,
    provider: EmbeddingProvider,
    train_data: Sequence[AddressSample],
    val_data: Sequence[AddressSample],
    trainer: Callable = train,
) -> list[SeedRun]:
    """One run per seed; a run that fails to converge is redone once with ``retry_seed``."""
    runs = []
    for seed in config.seeds:
        ckpt, log = trainer(config, model_config, provider, train_data, val_data, seed)
        run = SeedRun(seed, ckpt, log, seed, not detect_nonconvergence(log, config.nonconvergence_threshold))
        if not run.converged:
            logger.warning("seed %d did not converge; retrying with seed %d", seed, config.retry_seed)
            ckpt, log = trainer(config, model_config, provider, train_data, val_data, config.retry_seed)
            converged = not detect_nonconvergence(log, config.nonconvergence_threshold)
            if not converged:
                logger.warning("retry seed %d did not converge either", config.retry_seed)
            run = SeedRun(config.retry_seed, ckpt, log, seed, converged)
        run.checkpoint.manifest["requested_seed"] = str(seed)
        runs.append(run)
    return runs


def with_overrides(config: TrainConfig, **overrides) -> TrainConfig:
    return replace(config, **{k: v for k, v in overrides.items() if v is not None})
