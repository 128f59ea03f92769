import numpy as np

from addrtag.evaluation import CountryReport
from addrtag.plotting import plot_attention, plot_country_accuracy, plot_training_curves
from addrtag.training import EpochRecord, TrainLog

PNG = b"\x89PNG"


def test_country_accuracy_png(tmp_path):
    rows = [CountryReport("US", 90.0, 1.0, 5, 10), CountryReport("KR", 50.0, 3.0, 5, 10), CountryReport("MEAN", 70.0, 20.0, 5, 20)]
    path = plot_country_accuracy({"a": rows, "b": rows[:2]}, tmp_path / "acc.png", baseline=12.5, title="t")
    assert path.read_bytes().startswith(PNG)


def test_training_curves_png(tmp_path):
    log = TrainLog([EpochRecord(e, 1 / e, 1.2 / e, 0.5 + e / 20, 0.1, 0.0) for e in range(1, 6)], best_epoch=5)
    assert plot_training_curves({"seed 5": log}, tmp_path / "c.png").read_bytes().startswith(PNG)


def test_attention_png(tmp_path):
    alpha = np.random.default_rng(0).dirichlet(np.ones(4), size=4)
    path = plot_attention(alpha, ["221", "B", "Baker", "Street"], ["StreetNumber", "Unit", "StreetName", "StreetName"], tmp_path / "a.png")
    assert path.read_bytes().startswith(PNG)
