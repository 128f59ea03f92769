"""Sequence accuracy, per-country aggregation across seeds, evaluation suites and reports."""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .checkpoint import Checkpoint, checkpoint_bytes, load_checkpoint
from .core import NUM_TAGS, AddressSample, Tag
from .countries import TRAINING_COUNTRIES, ZERO_SHOT_COUNTRIES
from .data import group_by_country, load_dataset, make_batches, resolve_data_path
from .embeddings import EmbeddingProvider
from .errors import CountryNotAllowed, InsufficientData, LengthMismatch, ManifestMismatch
from .tagger import AddressTagger, predict_batch

SUITE_KINDS = ("holdout", "zero_shot", "incomplete_holdout")
SUITE_ALIASES = {"incomplete": "incomplete_holdout", "zero-shot": "zero_shot"}
REPORT_HEADER = ("country", "mean", "std", "n_seeds", "n_samples")
MEAN_ROW = "MEAN"


def sequence_accuracy(pred: Sequence, gold: Sequence) -> float:
    """Fraction of positions where the predicted tag equals the gold tag."""
    if len(pred) != len(gold):
        raise LengthMismatch(f"prediction has {len(pred)} tags, gold has {len(gold)}")
    if not gold:
        raise LengthMismatch("cannot score an empty sequence")
    return sum(p == g for p, g in zip(pred, gold)) / len(gold)


@dataclass(frozen=True)
class CountryReport:
    country: str
    mean_accuracy: float  # percent
    std_accuracy: float  # percent, population std across seeds
    n_seeds: int
    n_samples: int

    def __post_init__(self) -> None:
        if not -1e-9 <= self.mean_accuracy <= 100 + 1e-9 or self.std_accuracy < 0 or self.n_seeds < 1:
            raise ValueError(f"invalid report values: {self}")


def aggregate_country(country: str, per_seed: Sequence[Sequence[float]]) -> CountryReport:
    """``per_seed[k]`` holds the per-sample accuracies obtained with seed k."""
    if not per_seed or any(len(acc) == 0 for acc in per_seed):
        raise ValueError("need at least one seed with at least one sample")
    seed_means = np.array([100.0 * float(np.mean(acc)) for acc in per_seed])
    return CountryReport(
        country=country,
        mean_accuracy=float(seed_means.mean()),
        std_accuracy=float(seed_means.std(ddof=0)),
        n_seeds=len(per_seed),
        n_samples=len(per_seed[0]),
    )


def mean_row(reports: Sequence[CountryReport]) -> CountryReport:
    """Mean of the country means, with the population std across countries."""
    means = np.array([r.mean_accuracy for r in reports])
    return CountryReport(
        MEAN_ROW,
        float(means.mean()),
        float(means.std(ddof=0)),
        max(r.n_seeds for r in reports),
        sum(r.n_samples for r in reports),
    )


def random_baseline(samples: Sequence[AddressSample], rng_seed: int = 0) -> float:
    """Mean sequence accuracy (percent) of uniformly random tags over the 8 classes."""
    if not samples:
        raise ValueError("random baseline needs at least one sample")
    rng = np.random.default_rng(rng_seed)
    scores = [
        sequence_accuracy([Tag(int(k)) for k in rng.integers(0, NUM_TAGS, len(s.tags))], s.tags)
        for s in samples
    ]
    return 100.0 * float(np.mean(scores))


def per_sample_accuracy(
    model: AddressTagger,
    provider: EmbeddingProvider,
    samples: Sequence[AddressSample],
    batch_size: int = 256,
) -> list[float]:
    model.bind(provider)
    model.eval()
    scores = []
    for batch in make_batches(samples, batch_size):
        for s, pred in zip(batch.samples, predict_batch(model, provider, batch)):
            scores.append(sequence_accuracy(pred, s.tags))
    return scores


def token_accuracy(model, provider, samples, batch_size: int = 256) -> float:
    """Micro-averaged fraction of correctly tagged tokens."""
    model.bind(provider)
    model.eval()
    correct = total = 0
    for batch in make_batches(samples, batch_size):
        for s, pred in zip(batch.samples, predict_batch(model, provider, batch)):
            correct += sum(p == g for p, g in zip(pred, s.tags))
            total += len(s.tags)
    return correct / total


def mean_accuracy(model, provider, samples) -> float:
    """Mean sequence accuracy in percent."""
    return 100.0 * float(np.mean(per_sample_accuracy(model, provider, samples)))


def reorder_probe_eval(checkpoint: Checkpoint | AddressTagger, provider, probe_samples) -> float:
    model = checkpoint if isinstance(checkpoint, AddressTagger) else checkpoint.build_model()
    return mean_accuracy(model, provider, probe_samples)


# ---------------------------------------------------------------------------
# suites


def eligible_countries(kind: str) -> tuple[str, ...]:
    return ZERO_SHOT_COUNTRIES if kind == "zero_shot" else TRAINING_COUNTRIES


@dataclass(frozen=True)
class EvalSuite:
    kind: str
    countries: tuple[str, ...] = ()
    paths: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        kind = SUITE_ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in SUITE_KINDS:
            raise ValueError(f"suite kind must be one of {SUITE_KINDS}, got {self.kind!r}")
        allowed = set(eligible_countries(kind))
        bad = [c for c in self.countries if c not in allowed]
        if bad:
            raise CountryNotAllowed(f"{kind} suite cannot evaluate {', '.join(bad)}")


@dataclass
class SuiteResult:
    kind: str
    reports: list[CountryReport]
    mean: CountryReport
    manifest: dict[str, str] = field(default_factory=dict)

    @property
    def rows(self) -> list[CountryReport]:
        return [*self.reports, self.mean]


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def checkpoint_identity(ckpt: Checkpoint) -> str:
    return hashlib.sha256(checkpoint_bytes(ckpt)).hexdigest()[:16]


def run_suite(
    suite: EvalSuite,
    checkpoints: Sequence[Checkpoint | str | Path],
    provider: EmbeddingProvider,
    samples: Sequence[AddressSample] | None = None,
) -> SuiteResult:
    """Evaluate every checkpoint (one per seed) on each suite country.

    ``samples`` bypasses loading ``suite.paths``. Countries default to every
    eligible country present in the data.
    """
    if not checkpoints:
        raise ValueError("run_suite needs at least one checkpoint")
    ckpts = [c if isinstance(c, Checkpoint) else load_checkpoint(c) for c in checkpoints]
    kinds = {(c.manifest.get("variant"), c.manifest.get("adversarial"), c.manifest.get("embeddings")) for c in ckpts}
    if len(kinds) != 1:
        raise ManifestMismatch(f"checkpoints mix model families: {sorted(kinds)}")
    manifest = {
        "suite": suite.kind,
        "std_convention": "population",
        "checkpoints": ",".join(checkpoint_identity(c) for c in ckpts),
        "seeds": ",".join(c.manifest.get("seed", "?") for c in ckpts),
        "embeddings": provider.kind,
    }
    if samples is None:
        samples = []
        for i, path in enumerate(suite.paths):
            resolved = resolve_data_path(path)
            samples.extend(load_dataset(resolved))
            manifest[f"dataset.{i}"] = f"{path} sha256={_sha256_file(resolved)}"
    else:
        digest = hashlib.sha256("".join(s.to_json() + "\n" for s in samples).encode()).hexdigest()
        manifest["dataset.0"] = f"<in-memory> sha256={digest}"

    groups = group_by_country(samples)
    allowed = set(eligible_countries(suite.kind))
    countries = list(suite.countries) or [c for c in groups if c in allowed]
    stray = [c for c in countries if c not in allowed]
    if stray:
        raise CountryNotAllowed(f"{suite.kind} suite cannot evaluate {', '.join(stray)}")
    for c in countries:
        if not groups.get(c):
            raise InsufficientData(c, 1, 0)
    if not countries:
        raise InsufficientData(suite.kind, 1, 0)

    models = [c.build_model() for c in ckpts]
    reports = []
    for country in sorted(countries):
        per_seed = [per_sample_accuracy(m, provider, groups[country]) for m in models]
        reports.append(aggregate_country(country, per_seed))
    return SuiteResult(suite.kind, reports, mean_row(reports), manifest)


# ---------------------------------------------------------------------------
# report files


def round2(value: float) -> str:
    """Round half-even to 2 decimals on the shortest decimal form of ``value``."""
    if math.isnan(value):
        return "nan"
    return str(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN))


def report_csv(rows: Iterable[CountryReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for r in rows:
        writer.writerow([r.country, round2(r.mean_accuracy), round2(r.std_accuracy), r.n_seeds, r.n_samples])
    return buf.getvalue()


def report_text(rows: Iterable[CountryReport], title: str = "") -> str:
    lines = [title] if title else []
    lines.append(f"{'Country':<8} {'Accuracy (%)':>16} {'seeds':>6} {'samples':>8}")
    for r in rows:
        cell = f"{round2(r.mean_accuracy)} ± {round2(r.std_accuracy)}"
        lines.append(f"{r.country:<8} {cell:>16} {r.n_seeds:>6} {r.n_samples:>8}")
    return "\n".join(lines) + "\n"


def read_report_csv(path) -> list[CountryReport]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != REPORT_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [
            CountryReport(row[0], float(row[1]), float(row[2]), int(row[3]), int(row[4]))
            for row in reader
            if row
        ]
