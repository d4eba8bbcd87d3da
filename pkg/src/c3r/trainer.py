"""Min-max training of the encoder/classifier against an adversarial posterior.

The learner minimizes

    suf + mon + l1 * (KL_theta + KL_phi) + l2 * indep + l3 * cond_indep

over the encoder theta and the linear classifier, while the adversary phi
takes ascent steps on the monotonicity surrogate (keeping its own KL to the
prior small). Both sides share one gradient engine: every term is weighted,
so the same code path serves the full objective, the adversary objective and
the plain sufficiency baseline, and analytic gradients are exact for all of
them (finite-difference checked in the test suite).
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import matio
from .errors import ConfigError, ContractError, DivergenceError
from .numkern import (AdamState, Arrays, EncoderParams, adam_step,
                      encode_backward, encode_forward, glorot_uniform,
                      reparameterize)
from .regularizers import (cond_indep_value_grad_z, indep_value_grad,
                           kl_value_grad, sigmoid, softplus)
from .risks import RiskReport
from .synthdata import MultiModalBatch, SynthDataset
from . import rng

SCORE_EPS = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    lambda1: float = 0.01
    lambda2: float = 0.55
    lambda3: float = 0.4
    # reference lr 0.1 diverges at this model/batch scale; scaled down per
    # the linear-scaling convention
    lr: float = 0.003
    epochs: int = 100
    batch_size: int = 128
    adversary_steps_per_main_step: int = 1
    mon_weight: float = 1.0
    momentum: float = 0.8
    weight_decay: float = 1e-4
    grad_clip: float = 10.0  # global norm; <= 0 disables
    # grouped penalties ramp in linearly over this many epochs; turning them
    # on at full strength from step one traps the classifier at the trivial
    # zero-weight solution, where both penalties already vanish
    penalty_warmup_epochs: int = 30
    cosine_lr: bool = True
    # KL leash on the adversary's ascent. With only the objective's own
    # lambda1 the adversary can afford to mimic the learner's predictions,
    # and the learner's best reply is to randomize its own output, which
    # destroys classification; a unit leash keeps the game non-degenerate
    adv_kl_weight: float = 5.0
    hidden: tuple[int, int, int] = (64, 32, 128)
    rep_dim: int = 64
    seed: int = 0

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ConfigError("regularizer weights must be non-negative")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.adversary_steps_per_main_step < 0:
            raise ConfigError("adversary step count must be >= 0")
        if self.penalty_warmup_epochs < 0:
            raise ConfigError("penalty warmup must be >= 0")

    def warmup_scale(self, epoch: int) -> float:
        if self.penalty_warmup_epochs == 0:
            return 1.0
        return min(1.0, (epoch + 1) / self.penalty_warmup_epochs)

    def lr_at(self, epoch: int) -> float:
        """Cosine-annealed learning rate; settles the min-max game at the end."""
        if not self.cosine_lr or self.epochs <= 1:
            return self.lr
        frac = epoch / (self.epochs - 1)
        return self.lr * (0.05 + 0.95 * 0.5 * (1.0 + np.cos(np.pi * frac)))

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["hidden"] = list(self.hidden)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "TrainConfig":
        doc = dict(doc)
        if "hidden" in doc:
            doc["hidden"] = tuple(doc["hidden"])
        return cls(**doc)


class TermWeights(NamedTuple):
    suf: float
    mon: float
    kl_theta: float
    kl_phi: float
    indep: float
    cond_indep: float


def objective_weights(cfg: TrainConfig) -> TermWeights:
    return TermWeights(suf=1.0, mon=cfg.mon_weight,
                       kl_theta=cfg.lambda1, kl_phi=cfg.lambda1,
                       indep=cfg.lambda2, cond_indep=cfg.lambda3)


BASELINE_WEIGHTS = TermWeights(1.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class C3RModel:
    """Encoder theta, adversarial encoder phi, and the shared linear classifier."""

    theta: EncoderParams
    phi: EncoderParams
    clf_w: np.ndarray
    clf_b: np.ndarray

    @classmethod
    def init(cls, in_dim: int, cfg: TrainConfig) -> "C3RModel":
        gen = rng.substream(cfg.seed, rng.INIT)
        theta = EncoderParams.init(in_dim, gen, cfg.hidden, cfg.rep_dim)
        phi = EncoderParams.init(in_dim, gen, cfg.hidden, cfg.rep_dim)
        clf_w = glorot_uniform(gen, cfg.rep_dim, 1).ravel()
        return cls(theta=theta, phi=phi, clf_w=clf_w, clf_b=np.zeros(1))

    def main_arrays(self) -> Arrays:
        out = {f"theta.{k}": v for k, v in self.theta.arrays().items()}
        out["clf.w"] = self.clf_w
        out["clf.b"] = self.clf_b
        return out

    def adv_arrays(self) -> Arrays:
        return {f"phi.{k}": v for k, v in self.phi.arrays().items()}

    def with_main(self, arrays: Arrays) -> "C3RModel":
        theta = self.theta.with_arrays(
            {k.split(".", 1)[1]: v for k, v in arrays.items()
             if k.startswith("theta.")})
        return replace(self, theta=theta, clf_w=arrays["clf.w"],
                       clf_b=arrays["clf.b"])

    def with_adv(self, arrays: Arrays) -> "C3RModel":
        phi = self.phi.with_arrays(
            {k.split(".", 1)[1]: v for k, v in arrays.items()
             if k.startswith("phi.")})
        return replace(self, phi=phi)


class StepNoise(NamedTuple):
    """Reparameterization draws of one step, shared by every term in it."""

    eps_theta: np.ndarray
    eps_phi: np.ndarray

    @classmethod
    def zeros(cls, n: int, rep_dim: int) -> "StepNoise":
        return cls(np.zeros((n, rep_dim)), np.zeros((n, rep_dim)))

    @classmethod
    def draw(cls, gen: np.random.Generator, n: int, rep_dim: int) -> "StepNoise":
        return cls(gen.standard_normal((n, rep_dim)),
                   gen.standard_normal((n, rep_dim)))


class ObjectiveResult(NamedTuple):
    loss: float
    terms: dict
    grads: Arrays  # over "theta.*", "phi.*", "clf.w", "clf.b"
    scores_c: np.ndarray
    scores_cbar: np.ndarray


def evaluate_objective(model: C3RModel, x: np.ndarray, y: np.ndarray,
                       env_tags: np.ndarray, weights: TermWeights,
                       noise: StepNoise) -> ObjectiveResult:
    """Weighted objective value, per-term breakdown and exact gradients."""
    if x.shape[0] == 0:
        raise ContractError("objective of an empty batch is undefined")
    if env_tags is None:
        raise ConfigError("batch has no env_tags; the grouped penalties "
                          "need environment labels")
    n = x.shape[0]
    w = model.clf_w
    b = float(model.clf_b[0])

    mu_t, lv_t, cache_t = encode_forward(model.theta, x)
    c = reparameterize(mu_t, lv_t, noise.eps_theta)
    mu_p, lv_p, cache_p = encode_forward(model.phi, x)
    cbar = reparameterize(mu_p, lv_p, noise.eps_phi)

    z = c @ w + b
    zbar = cbar @ w + b
    p = sigmoid(z)
    pbar = sigmoid(zbar)

    suf = float(np.mean(softplus(z) - y * z))
    mon = float(np.mean(p * pbar + (1.0 - p) * (1.0 - pbar)))
    kl_t, dklt_mu, dklt_lv = kl_value_grad(mu_t, lv_t)
    kl_p, dklp_mu, dklp_lv = kl_value_grad(mu_p, lv_p)
    indep, dind_dc = indep_value_grad(c, env_tags)
    ci, dci_dz = cond_indep_value_grad_z(z, y, env_tags)

    terms = {"suf": suf, "mon": mon, "kl_theta": kl_t, "kl_phi": kl_p,
             "indep": indep, "cond_indep": ci}
    loss = (weights.suf * suf + weights.mon * mon
            + weights.kl_theta * kl_t + weights.kl_phi * kl_p
            + weights.indep * indep + weights.cond_indep * ci)

    dz = (weights.suf * (p - y) / n
          + weights.mon * (2.0 * pbar - 1.0) * p * (1.0 - p) / n
          + weights.cond_indep * dci_dz)
    dzbar = weights.mon * (2.0 * p - 1.0) * pbar * (1.0 - pbar) / n

    dc = dz[:, None] * w[None, :] + weights.indep * dind_dc
    dcbar = dzbar[:, None] * w[None, :]

    grads: Arrays = {
        "clf.w": c.T @ dz + cbar.T @ dzbar,
        "clf.b": np.array([dz.sum() + dzbar.sum()]),
    }
    dmu_t = dc + weights.kl_theta * dklt_mu
    dlv_t = dc * noise.eps_theta * 0.5 * np.exp(0.5 * lv_t) \
        + weights.kl_theta * dklt_lv
    for k, v in encode_backward(model.theta, cache_t, dmu_t, dlv_t).items():
        grads[f"theta.{k}"] = v
    dmu_p = dcbar + weights.kl_phi * dklp_mu
    dlv_p = dcbar * noise.eps_phi * 0.5 * np.exp(0.5 * lv_p) \
        + weights.kl_phi * dklp_lv
    for k, v in encode_backward(model.phi, cache_p, dmu_p, dlv_p).items():
        grads[f"phi.{k}"] = v
    return ObjectiveResult(loss=loss, terms=terms, grads=grads,
                           scores_c=p, scores_cbar=pbar)


def c3r_objective(model: C3RModel, batch: MultiModalBatch, cfg: TrainConfig,
                  noise: StepNoise | None = None) -> tuple[float, dict]:
    """Full objective on one batch; posterior means are used when no noise
    draws are supplied, making the value deterministic."""
    x = batch.fused()
    if noise is None:
        noise = StepNoise.zeros(x.shape[0], cfg.rep_dim)
    res = evaluate_objective(model, x, batch.labels, batch.env_tags,
                             objective_weights(cfg), noise)
    return res.loss, res.terms


def adversary_weights(cfg: TrainConfig) -> TermWeights:
    """What the adversary ascends: agreement minus its own prior KL."""
    return TermWeights(suf=0.0, mon=1.0, kl_theta=0.0,
                       kl_phi=-cfg.adv_kl_weight,
                       indep=0.0, cond_indep=0.0)


def _clip(grads: Arrays, max_norm: float) -> Arrays:
    if max_norm <= 0:
        return grads
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total <= max_norm:
        return grads
    scale = max_norm / total
    return {k: g * scale for k, g in grads.items()}


def _adv_update(model: C3RModel, x: np.ndarray, y: np.ndarray,
                tags: np.ndarray, cfg: TrainConfig, state: AdamState,
                noise: StepNoise, lr: float | None = None
                ) -> tuple[C3RModel, AdamState]:
    res = evaluate_objective(model, x, y, tags, adversary_weights(cfg), noise)
    ascent = {k: -g for k, g in res.grads.items() if k.startswith("phi.")}
    ascent = _clip(ascent, cfg.grad_clip)
    new_arrays, new_state = adam_step(state, model.adv_arrays(), ascent,
                                      lr=cfg.lr if lr is None else lr,
                                      momentum=cfg.momentum,
                                      weight_decay=cfg.weight_decay)
    return model.with_adv(new_arrays), new_state


def adversary_step(model: C3RModel, batch: MultiModalBatch, cfg: TrainConfig,
                   state: AdamState, noise: StepNoise | None = None
                   ) -> tuple[C3RModel, AdamState]:
    """One ascent step of phi on the adversary objective; theta and the
    classifier are untouched. Uses posterior means when no noise is given."""
    x = batch.fused()
    if noise is None:
        noise = StepNoise.zeros(x.shape[0], cfg.rep_dim)
    return _adv_update(model, x, batch.labels, batch.env_tags, cfg, state,
                       noise)


@dataclass
class TrainResult:
    model: C3RModel
    log: list[dict]
    config: TrainConfig
    weights: TermWeights


def batch_risk_report(model: C3RModel, batch: MultiModalBatch) -> dict:
    """Hard risks on a batch using posterior means (no sampling noise)."""
    x = batch.fused()
    mu_t, lv_t, _ = encode_forward(model.theta, x)
    mu_p, lv_p, _ = encode_forward(model.phi, x)
    b = float(model.clf_b[0])
    p = np.clip(sigmoid(mu_t @ model.clf_w + b), SCORE_EPS, 1.0 - SCORE_EPS)
    pbar = np.clip(sigmoid(mu_p @ model.clf_w + b), SCORE_EPS, 1.0 - SCORE_EPS)
    report = RiskReport.from_scores(p, pbar, batch.labels)
    kl_t, _, _ = kl_value_grad(mu_t, lv_t)
    kl_p, _, _ = kl_value_grad(mu_p, lv_p)
    out = {f"eval_{k}": v for k, v in report.as_dict().items()}
    out["eval_kl_theta"] = kl_t
    out["eval_kl_phi"] = kl_p
    return out


def _train_loop(dataset: SynthDataset, cfg: TrainConfig,
                weights: TermWeights, adv_steps: int) -> TrainResult:
    x = dataset.train.fused()
    y = dataset.train.labels
    tags = dataset.train.env_tags
    n = x.shape[0]
    model = C3RModel.init(x.shape[1], cfg)

    main_state = AdamState.init(model.main_arrays())
    adv_state = AdamState.init(model.adv_arrays())
    main_gen = rng.substream(cfg.seed, rng.REPARAM_MAIN)
    adv_gen = rng.substream(cfg.seed, rng.REPARAM_ADV)

    log: list[dict] = []
    last_good = model
    for epoch in range(cfg.epochs):
        scale = cfg.warmup_scale(epoch)
        lr_now = cfg.lr_at(epoch)
        epoch_weights = weights._replace(indep=weights.indep * scale,
                                         cond_indep=weights.cond_indep * scale)
        order = rng.substream(cfg.seed, rng.SHUFFLE, epoch).permutation(n)
        sums = {}
        batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            bx, by, btags = x[idx], y[idx], tags[idx]

            for _ in range(adv_steps):
                adv_noise = StepNoise.draw(adv_gen, len(idx), cfg.rep_dim)
                model, adv_state = _adv_update(model, bx, by, btags, cfg,
                                               adv_state, adv_noise, lr=lr_now)

            noise = StepNoise.draw(main_gen, len(idx), cfg.rep_dim)
            res = evaluate_objective(model, bx, by, btags, epoch_weights, noise)
            if not np.isfinite(res.loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}", checkpoint=last_good)
            main_grads = _clip({k: g for k, g in res.grads.items()
                                if not k.startswith("phi.")}, cfg.grad_clip)
            main_arrays, main_state = adam_step(
                main_state, model.main_arrays(), main_grads, lr=lr_now,
                momentum=cfg.momentum, weight_decay=cfg.weight_decay)
            model = model.with_main(main_arrays)

            for k, v in res.terms.items():
                sums[k] = sums.get(k, 0.0) + v
            sums["loss"] = sums.get("loss", 0.0) + res.loss
            batches += 1

        entry = {"epoch": epoch}
        entry.update({f"train_{k}": v / batches for k, v in sums.items()})
        entry.update(batch_risk_report(model, dataset.eval))
        log.append(entry)
        last_good = model
    return TrainResult(model=model, log=log, config=cfg, weights=weights)


def train(dataset: SynthDataset, cfg: TrainConfig) -> TrainResult:
    """Alternating adversary-ascent / main-descent training on the dataset."""
    return _train_loop(dataset, cfg, objective_weights(cfg),
                       cfg.adversary_steps_per_main_step)


def fit_baseline(dataset: SynthDataset, cfg: TrainConfig) -> TrainResult:
    """Plain sufficiency-risk minimizer: no monotonicity term, no penalties,
    no adversary steps. Serves as the ERM comparator."""
    return _train_loop(dataset, cfg, BASELINE_WEIGHTS, adv_steps=0)


# ---------------------------------------------------------------------------
# Checkpoints: parameter tensors in the shared binary format plus a manifest.

def save_checkpoint(out_dir: str | Path, result: TrainResult) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    arrays = dict(result.model.main_arrays())
    arrays.update(result.model.adv_arrays())
    for name, arr in arrays.items():
        matio.write_matrix(out / (name.replace(".", "_") + ".bin"), arr)
    manifest = {
        "config": result.config.to_json(),
        "weights": list(result.weights),
        "epoch": len(result.log),
        "in_dim": result.model.theta.in_dim,
        "param_names": sorted(arrays),
        "risk_log": result.log,
        "created_unix": time.time(),  # only non-reproducible field
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(ckpt_dir: str | Path) -> TrainResult:
    root = Path(ckpt_dir)
    path = root / "manifest.json"
    if not path.exists():
        raise ConfigError(f"{root}: no manifest.json; not a checkpoint")
    with open(path) as fh:
        manifest = json.load(fh)
    cfg = TrainConfig.from_json(manifest["config"])
    arrays = {}
    for name in manifest["param_names"]:
        mat = matio.read_matrix(root / (name.replace(".", "_") + ".bin"))
        arrays[name] = mat
    shaped = _reshape_params(arrays, cfg, manifest["in_dim"])
    theta = EncoderParams(**{k.split(".", 1)[1]: v for k, v in shaped.items()
                             if k.startswith("theta.")})
    phi = EncoderParams(**{k.split(".", 1)[1]: v for k, v in shaped.items()
                           if k.startswith("phi.")})
    model = C3RModel(theta=theta, phi=phi, clf_w=shaped["clf.w"],
                     clf_b=shaped["clf.b"])
    return TrainResult(model=model, log=manifest["risk_log"], config=cfg,
                       weights=TermWeights(*manifest["weights"]))


def _reshape_params(arrays: Arrays, cfg: TrainConfig, in_dim: int) -> Arrays:
    """Stored matrices are 2-D; restore vector parameters to 1-D."""
    out = {}
    for name, mat in arrays.items():
        if name.endswith((".b1", ".b2", ".b3", ".b_mean", ".b_logvar")) \
                or name in ("clf.w", "clf.b"):
            out[name] = mat.ravel()
        else:
            out[name] = mat
    return out
