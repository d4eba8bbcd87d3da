"""Sufficiency, necessity and monotonicity risks with differentiable surrogates.

Each risk comes in two variants: the hard value is an indicator-loss mean at
the 0.5 decision threshold (scores of exactly 0.5 count as class 1), and the
surrogate is the smooth relaxation used for training (cross-entropy for
sufficiency/necessity, prediction-agreement product for monotonicity).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ContractError, DimensionError


class RiskValue(NamedTuple):
    hard: float
    surrogate: float


def _check_scores(scores: np.ndarray, labels: np.ndarray | None = None) -> None:
    if scores.size == 0:
        raise ContractError("risk of an empty batch is undefined")
    if labels is not None and labels.shape != scores.shape:
        raise DimensionError("scores and labels must have matching shapes")


def predict(scores: np.ndarray) -> np.ndarray:
    """Hard predictions; ties at 0.5 go to class 1."""
    return (np.asarray(scores) >= 0.5).astype(np.float64)


def suf_risk(scores: np.ndarray, labels: np.ndarray) -> RiskValue:
    """Misclassification of the causal-sample scores against the labels."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    _check_scores(scores, labels)
    hard = float(np.mean(predict(scores) != labels))
    surrogate = float(-np.mean(labels * np.log(scores)
                               + (1.0 - labels) * np.log(1.0 - scores)))
    return RiskValue(hard, surrogate)


def nec_risk(scores: np.ndarray, labels: np.ndarray) -> RiskValue:
    """Agreement of the intervention-sample scores with the labels.

    High when the adversarial representation still predicts the label, i.e.
    the complement of suf_risk on the same scores.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    _check_scores(scores, labels)
    hard = float(np.mean(predict(scores) == labels))
    surrogate = float(-np.mean((1.0 - labels) * np.log(scores)
                               + labels * np.log(1.0 - scores)))
    return RiskValue(hard, surrogate)


def mon_risk(scores_c: np.ndarray, scores_cbar: np.ndarray) -> RiskValue:
    """Prediction agreement between causal and intervention scores."""
    p = np.asarray(scores_c, dtype=np.float64)
    q = np.asarray(scores_cbar, dtype=np.float64)
    _check_scores(p)
    if p.shape != q.shape:
        raise ContractError("score batches must have matching row counts")
    hard = float(np.mean(predict(p) == predict(q)))
    surrogate = float(np.mean(p * q + (1.0 - p) * (1.0 - q)))
    return RiskValue(hard, surrogate)


def c3_bound(suf: float, mon: float) -> float:
    """Trainable upper bound on suf + nec: twice sufficiency plus monotonicity."""
    return 2.0 * suf + mon


def decomposition_check(suf: float, nec: float) -> float:
    """Expected monotonicity when the two prediction events are independent.

    Test oracle only: suf * (1 - nec) + (1 - suf) * nec.
    """
    return suf + nec - 2.0 * suf * nec


@dataclass(frozen=True)
class RiskReport:
    """Risk values on one batch: hard and surrogate variants of every term."""

    suf: RiskValue
    nec: RiskValue
    mon: RiskValue

    @property
    def c3_bound_hard(self) -> float:
        return c3_bound(self.suf.hard, self.mon.hard)

    @property
    def c3_bound_surrogate(self) -> float:
        return c3_bound(self.suf.surrogate, self.mon.surrogate)

    @classmethod
    def from_scores(cls, scores_c: np.ndarray, scores_cbar: np.ndarray,
                    labels: np.ndarray) -> "RiskReport":
        return cls(suf=suf_risk(scores_c, labels),
                   nec=nec_risk(scores_cbar, labels),
                   mon=mon_risk(scores_c, scores_cbar))

    def as_dict(self) -> dict:
        return {
            "suf_hard": self.suf.hard, "suf_surrogate": self.suf.surrogate,
            "nec_hard": self.nec.hard, "nec_surrogate": self.nec.surrogate,
            "mon_hard": self.mon.hard, "mon_surrogate": self.mon.surrogate,
            "c3_bound_hard": self.c3_bound_hard,
            "c3_bound_surrogate": self.c3_bound_surrogate,
        }
