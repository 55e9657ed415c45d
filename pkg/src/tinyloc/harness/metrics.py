"""Localization error summaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SUBMETER = 1.0


@dataclass(frozen=True)
class ErrorCdf:
    errors: np.ndarray      # sorted ascending
    probabilities: np.ndarray
    fraction_within: float  # fraction of errors <= 1 m
    mean: float

    def to_dict(self) -> dict:
        return {"fraction_within_1m": self.fraction_within, "mean_error": self.mean,
                "cdf_errors": self.errors.tolist(), "cdf_probabilities": self.probabilities.tolist()}


def error_cdf(errors, threshold: float = SUBMETER) -> ErrorCdf:
    """Empirical CDF ``P(e <= errors[i]) = (i + 1) / n`` on the sorted errors."""
    e = np.sort(np.asarray(errors, dtype=float).reshape(-1))
    if e.size == 0:
        raise ValueError("error_cdf needs at least one error")
    if np.any(e < 0) or not np.all(np.isfinite(e)):
        raise ValueError("errors must be finite and non-negative")
    probs = np.arange(1, e.size + 1) / e.size
    return ErrorCdf(e, probs, float(np.mean(e <= threshold)), float(e.mean()))


def localization_errors(estimates, truth) -> np.ndarray:
    return np.linalg.norm(np.asarray(estimates, float) - np.asarray(truth, float), axis=1)


@dataclass
class MethodReport:
    method: str
    errors: np.ndarray
    events: list = field(default_factory=list)

    @property
    def cdf(self) -> ErrorCdf:
        return error_cdf(self.errors)

    def to_dict(self) -> dict:
        c = self.cdf
        return {"method": self.method, "errors": self.errors.tolist(),
                "fraction_within_1m": c.fraction_within, "mean_error": c.mean,
                "events": [{"k": e.k, "trigger": e.trigger, "from": e.from_model,
                            "to": e.to_model, "metrics": list(e.metrics)} for e in self.events]}


@dataclass
class EvaluationReport:
    """Headline numbers for the multi-NN + KF run plus every baseline and check.

    Contains no timing information, so two runs of the same config serialize
    to identical bytes.
    """

    methods: dict[str, MethodReport]
    headline: str = "multi_nn_kf"
    checks: dict = field(default_factory=dict)

    @property
    def errors(self) -> np.ndarray:
        return self.methods[self.headline].errors

    @property
    def fraction_within(self) -> float:
        return self.methods[self.headline].cdf.fraction_within

    @property
    def mean_error(self) -> float:
        return self.methods[self.headline].cdf.mean

    @property
    def events(self) -> list:
        return self.methods[self.headline].events

    def table(self) -> list[tuple[str, float, float]]:
        return [(name, m.cdf.mean, m.cdf.fraction_within) for name, m in self.methods.items()]

    def to_dict(self) -> dict:
        return {"headline": self.headline,
                "methods": {k: v.to_dict() for k, v in self.methods.items()},
                "checks": self.checks}
