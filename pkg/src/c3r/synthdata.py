"""Synthetic three-modality dataset with controlled causal factor structure.

Every sample carries four kinds of latent factors per modality:

* snc  -- a Bernoulli bit that is both a sufficient and a necessary cause of
          the label (the label is the majority snc bit across modalities,
          flipped with a small noise probability),
* sc   -- sufficient but unnecessary: copies snc when snc = 1, otherwise an
          independent Bernoulli redraw,
* nc   -- necessary but insufficient: snc gated by an extra Bernoulli,
* sp   -- a spurious block: omega * snc + (1 - omega) * standard normal,
          so its correlation with the cause is dialed by omega.

Each modality's feature row is the concatenation of the four factor blocks
(each block_dim wide), perturbed with Gaussian noise and squashed through a
piecewise shrink-and-sigmoid map into (0, 1). Ground-truth factor matrices
are retained for representation-quality evaluation.

All randomness flows from the config seed through named substreams, one per
factor type, so regenerating with an extra factor leaves the others intact.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import matio, rng
from .errors import ConfigError, DimensionError
from .regularizers import sigmoid

TRAIN_SPLIT = 0
EVAL_SPLIT = 1
N_MODALITIES = 3
N_FACTOR_TYPES = 4  # snc, sc, nc, sp blocks per modality row


@dataclass(frozen=True)
class SynthConfig:
    """All knobs of the generator; defaults reproduce the reference setup."""

    n_train: int = 1000
    n_eval: int = 200
    xi_a: tuple[float, float, float] = (0.5, 0.5, 0.5)
    xi_label: float = 0.15
    xi_b: tuple[float, float, float] = (0.5, 0.7, 0.9)
    omega: float = 0.3
    block_dim: int = 5
    noise_var: float = 0.4
    seed: int = 0

    def __post_init__(self):
        for name in ("xi_a", "xi_b"):
            vals = getattr(self, name)
            if len(vals) != N_MODALITIES:
                raise ConfigError(f"{name} needs one entry per modality")
            if not all(0.0 < v < 1.0 for v in vals):
                raise ConfigError(f"{name} entries must lie in (0, 1)")
        if not 0.0 < self.xi_label < 1.0:
            raise ConfigError("xi_label must lie in (0, 1)")
        if not 0.0 <= self.omega <= 1.0:
            raise ConfigError("omega must lie in [0, 1]")
        if self.block_dim < 1:
            raise ConfigError("block_dim must be at least 1")
        if self.noise_var < 0.0:
            raise ConfigError("noise_var must be non-negative")
        if self.n_train < 1 or self.n_eval < 1:
            raise ConfigError("split sizes must be positive")

    @property
    def feature_dim(self) -> int:
        return N_FACTOR_TYPES * self.block_dim

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "SynthConfig":
        doc = dict(doc)
        for key in ("xi_a", "xi_b"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(**doc)


@dataclass(frozen=True)
class FactorRecord:
    """Ground-truth factors of a single sample."""

    snc: np.ndarray      # (3,) bits
    sc: np.ndarray       # (3,) bits
    nc: np.ndarray       # (3,) bits
    sp: np.ndarray       # (3, block_dim) floats
    label: int


@dataclass(frozen=True)
class FactorTable:
    """Vectorized ground-truth factors for one split."""

    snc: np.ndarray       # (n, 3)
    sc: np.ndarray        # (n, 3)
    nc: np.ndarray        # (n, 3)
    sp: np.ndarray        # (n, 3, block_dim)
    labels: np.ndarray    # (n,)
    subsets: np.ndarray   # (n,) quarter index, the per-type bookkeeping split
    env_tags: np.ndarray  # (n,)

    @property
    def n(self) -> int:
        return self.snc.shape[0]

    @property
    def sp_flat(self) -> np.ndarray:
        return self.sp.reshape(self.n, -1)

    def record(self, i: int) -> FactorRecord:
        return FactorRecord(snc=self.snc[i], sc=self.sc[i], nc=self.nc[i],
                            sp=self.sp[i], label=int(self.labels[i]))

    def __iter__(self):
        return (self.record(i) for i in range(self.n))


@dataclass(frozen=True)
class MultiModalBatch:
    """Model-facing batch: one feature matrix per modality plus labels/tags."""

    modalities: tuple[np.ndarray, ...]
    labels: np.ndarray
    env_tags: np.ndarray

    def __post_init__(self):
        rows = {m.shape[0] for m in self.modalities}
        rows.add(self.labels.shape[0])
        rows.add(self.env_tags.shape[0])
        if len(rows) != 1:
            raise DimensionError("all modalities, labels and tags must share row count")

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    def fused(self) -> np.ndarray:
        """Concatenate modalities along features; the encoder input."""
        return np.concatenate(self.modalities, axis=1)

    def subset(self, idx: np.ndarray) -> "MultiModalBatch":
        return MultiModalBatch(
            modalities=tuple(m[idx] for m in self.modalities),
            labels=self.labels[idx], env_tags=self.env_tags[idx])


@dataclass(frozen=True)
class SynthDataset:
    train: MultiModalBatch
    eval: MultiModalBatch
    train_factors: FactorTable
    eval_factors: FactorTable
    config: SynthConfig


def gen_factors(cfg: SynthConfig, n: int, split: int = TRAIN_SPLIT) -> FactorTable:
    """Draw the latent factors for `n` samples of one split.

    Each factor type consumes its own named substream of the config seed.
    """
    d = cfg.block_dim
    xi_a = np.asarray(cfg.xi_a)
    xi_b = np.asarray(cfg.xi_b)

    # one latent uniform per sample, thresholded per modality: each modality's
    # bit is Bernoulli(xi_a) marginally, and the bits are comonotone views of
    # the same shared event (identical whenever the xi_a coincide)
    u_snc = rng.substream(cfg.seed, rng.SNC, split).random((n, 1))
    snc = (u_snc < xi_a).astype(np.float64)

    u_sc = rng.substream(cfg.seed, rng.SC, split).random((n, N_MODALITIES))
    sc = np.where(snc == 1.0, 1.0, (u_sc < xi_a).astype(np.float64))

    u_nc = rng.substream(cfg.seed, rng.NC, split).random((n, N_MODALITIES))
    nc = snc * (u_nc < xi_b)

    # the spurious factor is one variable per sample: a single standard-normal
    # draw mixed with the shared cause bit and broadcast to every modality's
    # block, like the all-ones vectors the bits multiply
    sp_noise = rng.substream(cfg.seed, rng.SP, split).standard_normal((n, 1, 1))
    shared = (snc.sum(axis=1) >= 2.0).astype(np.float64)[:, None, None]
    sp = cfg.omega * shared + (1.0 - cfg.omega) * sp_noise
    sp = np.broadcast_to(sp, (n, N_MODALITIES, d)).copy()

    flips = (rng.substream(cfg.seed, rng.LABEL, split).random(n) < cfg.xi_label)
    majority = (snc.sum(axis=1) >= 2.0).astype(np.int64)
    labels = majority ^ flips.astype(np.int64)

    subsets = np.arange(n) * 4 // n
    env_tags = _env_tags(sp_noise)
    return FactorTable(snc=snc, sc=sc, nc=nc, sp=sp,
                       labels=labels, subsets=subsets, env_tags=env_tags)


def _env_tags(sp_noise: np.ndarray) -> np.ndarray:
    """Group id per sample: the sign bucket of its spurious noise draw.

    Two environments that differ only in the spurious component give the
    grouped penalties a contrast that carries no causal signal.
    """
    return (sp_noise.reshape(sp_noise.shape[0], -1)[:, 0] > 0.0).astype(np.int64)


def upsilon1(v: np.ndarray) -> np.ndarray:
    """Subtract 0.5 where v > 0, zero elsewhere."""
    return np.where(v > 0.0, v - 0.5, 0.0)


def upsilon2(v: np.ndarray) -> np.ndarray:
    """Add 0.5 where v < 0, zero elsewhere."""
    return np.where(v < 0.0, v + 0.5, 0.0)


def squash(v: np.ndarray) -> np.ndarray:
    """Map raw block values into (0, 1): sigmoid of the combined shrink maps.

    The two shrink maps have disjoint supports, so they are summed before
    the sigmoid; their pointwise product is identically zero and would wipe
    out the signal.
    """
    return sigmoid(upsilon1(v) + upsilon2(v))


def assemble_sample(factors: FactorRecord, cfg: SynthConfig,
                    noise: np.ndarray) -> np.ndarray:
    """Feature rows (one per modality) for a single factor record.

    `noise` must be a (3, 4 * block_dim) standard-normal draw; it is scaled
    by the configured noise variance here.
    """
    d = cfg.block_dim
    ones = np.ones(d)
    rows = []
    for a in range(N_MODALITIES):
        v = np.concatenate([factors.snc[a] * ones, factors.sc[a] * ones,
                            factors.nc[a] * ones, factors.sp[a]])
        v = v + np.sqrt(cfg.noise_var) * noise[a]
        rows.append(squash(v))
    return np.stack(rows)


def _assemble_batch(table: FactorTable, cfg: SynthConfig, split: int
                    ) -> MultiModalBatch:
    d = cfg.block_dim
    n = table.n
    blocks = np.concatenate([
        np.repeat(table.snc[:, :, None], d, axis=2),
        np.repeat(table.sc[:, :, None], d, axis=2),
        np.repeat(table.nc[:, :, None], d, axis=2),
        table.sp,
    ], axis=2)  # (n, 3, 4d)
    noise = rng.substream(cfg.seed, rng.ASSEMBLY, split).standard_normal(blocks.shape)
    v = blocks + np.sqrt(cfg.noise_var) * noise
    feats = squash(v)
    return MultiModalBatch(
        modalities=tuple(feats[:, a, :] for a in range(N_MODALITIES)),
        labels=table.labels.astype(np.float64),
        env_tags=table.env_tags)


def generate_dataset(cfg: SynthConfig) -> SynthDataset:
    """Deterministic train/eval dataset plus ground-truth factors."""
    train_factors = gen_factors(cfg, cfg.n_train, TRAIN_SPLIT)
    eval_factors = gen_factors(cfg, cfg.n_eval, EVAL_SPLIT)
    return SynthDataset(
        train=_assemble_batch(train_factors, cfg, TRAIN_SPLIT),
        eval=_assemble_batch(eval_factors, cfg, EVAL_SPLIT),
        train_factors=train_factors,
        eval_factors=eval_factors,
        config=cfg)


# ---------------------------------------------------------------------------
# On-disk format: one binary matrix per modality, labels and factors as CSV,
# config echoed as JSON.

def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _factor_header(d: int) -> list[str]:
    cols = ["index"]
    for name in ("snc", "sc", "nc"):
        cols += [f"{name}_{a}" for a in range(N_MODALITIES)]
    cols += [f"sp_{a}_{k}" for a in range(N_MODALITIES) for k in range(d)]
    return cols


def save_dataset(ds: SynthDataset, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for split, batch, factors in (("train", ds.train, ds.train_factors),
                                  ("eval", ds.eval, ds.eval_factors)):
        for a, mat in enumerate(batch.modalities):
            matio.write_matrix(out / f"{split}_modality{a}.bin", mat)
        _write_csv(out / f"{split}_labels.csv",
                   ["index", "label", "env_tag", "subset"],
                   ((i, int(batch.labels[i]), int(batch.env_tags[i]),
                     int(factors.subsets[i])) for i in range(batch.n)))
        d = ds.config.block_dim
        rows = []
        for i in range(factors.n):
            row = [i]
            row += [int(b) for b in factors.snc[i]]
            row += [int(b) for b in factors.sc[i]]
            row += [int(b) for b in factors.nc[i]]
            row += [f"{x:.17g}" for x in factors.sp[i].reshape(-1)]
            rows.append(row)
        _write_csv(out / f"{split}_factors.csv", _factor_header(d), rows)
    with open(out / "config.json", "w") as fh:
        json.dump(ds.config.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(data_dir: str | Path) -> SynthDataset:
    root = Path(data_dir)
    cfg_path = root / "config.json"
    if not cfg_path.exists():
        raise ConfigError(f"{root}: no config.json; not a dataset directory")
    with open(cfg_path) as fh:
        cfg = SynthConfig.from_json(json.load(fh))
    d = cfg.block_dim

    def load_split(split: str, n_expected: int):
        mods = tuple(matio.read_matrix(root / f"{split}_modality{a}.bin")
                     for a in range(N_MODALITIES))
        labels = np.zeros(n_expected)
        env = np.zeros(n_expected, dtype=np.int64)
        subsets = np.zeros(n_expected, dtype=np.int64)
        with open(root / f"{split}_labels.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                i = int(row["index"])
                labels[i] = float(row["label"])
                env[i] = int(row["env_tag"])
                subsets[i] = int(row["subset"])
        snc = np.zeros((n_expected, N_MODALITIES))
        sc = np.zeros_like(snc)
        nc = np.zeros_like(snc)
        sp = np.zeros((n_expected, N_MODALITIES, d))
        with open(root / f"{split}_factors.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                i = int(row["index"])
                for a in range(N_MODALITIES):
                    snc[i, a] = float(row[f"snc_{a}"])
                    sc[i, a] = float(row[f"sc_{a}"])
                    nc[i, a] = float(row[f"nc_{a}"])
                    for k in range(d):
                        sp[i, a, k] = float(row[f"sp_{a}_{k}"])
        batch = MultiModalBatch(modalities=mods, labels=labels, env_tags=env)
        factors = FactorTable(snc=snc, sc=sc, nc=nc, sp=sp,
                              labels=labels.astype(np.int64), subsets=subsets,
                              env_tags=env)
        return batch, factors

    train, train_factors = load_split("train", cfg.n_train)
    ev, eval_factors = load_split("eval", cfg.n_eval)
    return SynthDataset(train=train, eval=ev, train_factors=train_factors,
                        eval_factors=eval_factors, config=cfg)
