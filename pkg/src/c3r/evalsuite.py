"""Evaluation: representation quality, noise robustness, and risk bounds.

Representation quality is measured by the distance-correlation statistic
between the encoder's posterior means and each ground-truth factor matrix.
Robustness is average / worst-case accuracy over repeated Gaussian
corruption of a random subset of modalities. The bound reporters turn the
training-side risks into computable certificates: a transfer bound that
scales the trainable risk bound by a train/test density-ratio factor, and a
sample-complexity gap bound of the form KL + ln(n / eps) / n (reported
without its unidentified additive constant).
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .numkern import encode_forward
from .regularizers import sigmoid
from .risks import predict
from .synthdata import FactorTable, MultiModalBatch, SynthDataset
from .trainer import C3RModel
from . import rng


def _centered_distances(a: np.ndarray) -> np.ndarray:
    sq = np.sum(a * a, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (a @ a.T)
    np.maximum(d2, 0.0, out=d2)
    d = np.sqrt(d2)
    row = d.mean(axis=1, keepdims=True)
    col = d.mean(axis=0, keepdims=True)
    return d - row - col + d.mean()


def distance_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Distance correlation between two sample matrices, in [0, 1].

    Pairwise Euclidean distance matrices are double-centered; the statistic
    is the normalized mean of their elementwise product. Zero in the
    population iff the two variables are independent.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[0] == 1:
        a = a.T
    if b.shape[0] == 1:
        b = b.T
    if a.shape[0] != b.shape[0]:
        raise DimensionError("inputs must have equal row counts")
    if a.shape[0] < 4:
        raise DimensionError("need at least 4 rows for a distance correlation")
    ca = _centered_distances(a)
    cb = _centered_distances(b)
    n2 = a.shape[0] ** 2
    var_a = float(np.sum(ca * ca)) / n2
    var_b = float(np.sum(cb * cb)) / n2
    if var_a <= 0.0 or var_b <= 0.0:
        warnings.warn("constant input has no distance variance; returning 0",
                      stacklevel=2)
        return 0.0
    cov = max(float(np.sum(ca * cb)) / n2, 0.0)
    return float(np.sqrt(cov / np.sqrt(var_a * var_b)))


def inject_noise(batch: MultiModalBatch, variance: float, fraction: float,
                 gen: np.random.Generator) -> MultiModalBatch:
    """Corrupt a random subset of modalities with zero-mean Gaussian noise.

    Each (sample, modality) pair is selected independently with probability
    `fraction`; selected feature rows get additive noise of the given
    variance.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError("fraction must lie in [0, 1]")
    if variance < 0.0:
        raise ConfigError("variance must be non-negative")
    n = batch.n
    mask = gen.random((n, len(batch.modalities))) < fraction
    scale = np.sqrt(variance)
    noisy = []
    for a, mat in enumerate(batch.modalities):
        noise = gen.standard_normal(mat.shape) * scale
        noisy.append(mat + noise * mask[:, a][:, None])
    return MultiModalBatch(modalities=tuple(noisy), labels=batch.labels,
                           env_tags=batch.env_tags)


def encode_means(model: C3RModel, batch: MultiModalBatch) -> np.ndarray:
    """Posterior means of the learned representation for a batch."""
    mean, _, _ = encode_forward(model.theta, batch.fused())
    return mean


def model_accuracy(model: C3RModel, batch: MultiModalBatch) -> float:
    scores = sigmoid(encode_means(model, batch) @ model.clf_w
                     + float(model.clf_b[0]))
    return float(np.mean(predict(scores) == batch.labels))


@dataclass(frozen=True)
class NoiseConfig:
    variance: float = 10.0
    fraction: float = 0.5
    seed: int = 0


def accuracy_avg_worst(model: C3RModel, batch: MultiModalBatch,
                       noise_cfg: NoiseConfig, n_trials: int
                       ) -> tuple[float, float, list[float]]:
    """Mean and minimum accuracy across independent corruption trials."""
    if n_trials < 1:
        raise ConfigError("n_trials must be at least 1")
    accs = []
    for trial in range(n_trials):
        gen = rng.substream(noise_cfg.seed, rng.EVAL_NOISE, trial)
        corrupted = inject_noise(batch, noise_cfg.variance,
                                 noise_cfg.fraction, gen)
        accs.append(model_accuracy(model, corrupted))
    return float(np.mean(accs)), float(min(accs)), accs


@dataclass(frozen=True)
class CorrelationReport:
    """Distance correlation of the representation with each factor type."""

    dcorr_snc: float
    dcorr_sc: float
    dcorr_nc: float
    dcorr_sp: float

    def as_dict(self) -> dict:
        return asdict(self)


def causal_property_report(model: C3RModel, dataset: SynthDataset
                           ) -> CorrelationReport:
    """Correlate the eval-split representation with the ground-truth factors."""
    factors = dataset.eval_factors
    if factors is None:
        raise ContractError("dataset carries no ground-truth factors")
    reps = encode_means(model, dataset.eval)
    return CorrelationReport(
        dcorr_snc=distance_correlation(reps, factors.snc),
        dcorr_sc=distance_correlation(reps, factors.sc),
        dcorr_nc=distance_correlation(reps, factors.nc),
        dcorr_sp=distance_correlation(reps, factors.sp_flat))


def transfer_risk_bound(suf_hard: float, mon_hard: float, ld: float = 1.0,
                        residual: float = 0.0) -> float:
    """Test-side risk bound: ld * (2 * suf + mon) + residual.

    `ld` is the train/test density-ratio factor (1 for shared
    distributions); `residual` covers mass outside the training support and
    defaults to 0 for the invariant-representation case.
    """
    if ld < 1.0:
        raise ConfigError("the density-ratio factor cannot be below 1")
    return ld * (2.0 * suf_hard + mon_hard) + residual


def density_ratio_factor(train_factors: FactorTable,
                         eval_factors: FactorTable) -> float:
    """Histogram estimate of the worst train/eval density ratio.

    Discretizes on the joint configuration of the binary factor bits and
    takes the maximum smoothed frequency ratio; equals ~1 when both splits
    come from the same distribution. Optional helper for shifted splits.
    """
    def cells(f: FactorTable) -> np.ndarray:
        bits = np.concatenate([f.snc, f.sc, f.nc], axis=1).astype(np.int64)
        weights = 1 << np.arange(bits.shape[1])
        return bits @ weights

    tr = cells(train_factors)
    ev = cells(eval_factors)
    n_cells = 1 << (3 * 3)
    tr_counts = np.bincount(tr, minlength=n_cells).astype(np.float64)
    ev_counts = np.bincount(ev, minlength=n_cells).astype(np.float64)
    p_tr = (tr_counts + 0.5) / (tr_counts.sum() + 0.5 * n_cells)
    p_ev = (ev_counts + 0.5) / (ev_counts.sum() + 0.5 * n_cells)
    occupied = tr_counts > 0
    return max(float(np.max(p_tr[occupied] / p_ev[occupied])), 1.0)


def sample_complexity_term(n: int, epsilon: float) -> float:
    """ln(n / epsilon) / n, the sample-size part of the gap bounds."""
    if n < 1:
        raise ConfigError("n must be at least 1")
    if not 0.0 < epsilon < 1.0:
        raise ConfigError("epsilon must lie in (0, 1)")
    return float(np.log(n / epsilon) / n)


@dataclass(frozen=True)
class BoundReport:
    """Computable pieces of the risk bounds on one trained model.

    The gap bounds hold with probability at least 1 - epsilon and are
    reported minus an unidentified O(1) constant, so they rank models but
    are not absolute certificates.
    """

    ld_estimate: float
    transfer_rhs: float
    kl_theta: float
    kl_phi: float
    sample_term: float
    suf_gap_minus_constant: float
    mon_gap_minus_constant: float
    epsilon: float
    n: int

    def as_dict(self) -> dict:
        return asdict(self)


def bound_report(suf_hard: float, mon_hard: float, kl_theta: float,
                 kl_phi: float, n: int, epsilon: float, ld: float = 1.0,
                 residual: float = 0.0) -> BoundReport:
    term = sample_complexity_term(n, epsilon)
    return BoundReport(
        ld_estimate=ld,
        transfer_rhs=transfer_risk_bound(suf_hard, mon_hard, ld, residual),
        kl_theta=kl_theta,
        kl_phi=kl_phi,
        sample_term=term,
        suf_gap_minus_constant=kl_theta + term,
        mon_gap_minus_constant=kl_theta + kl_phi + term,
        epsilon=epsilon,
        n=n)
