"""Optimization loops for the completion stages and the boundary network.

Stages are trained independently: the second stage learns from teacher-forced
inputs (ground-truth stuff planes overlaid with the sparse map), never from
first-stage outputs, so no stage ordering or cross-stage gradients exist.
Every epoch re-sparsifies each parent scene with a seed derived from
(run seed, epoch, example id), which makes whole runs replayable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .dataset import SceneExample, ScenePair, derive_seed, epoch_iterator
from .errors import CheckpointError, ConfigurationError, TrainingError
from .extractors import build_perceptual_extractor
from .labelmaps import (
    ALL,
    THINGS_PLUS_NONE,
    embed_sparse_all,
    encode_one_hot,
    encode_stuff_planes,
    extract_boundaries,
    overlay,
    to_sparse_things,
)
from .losses import LossWeights, composite_bd_loss, composite_oc_loss, lsgan_losses
from .models import (
    ROLES,
    DiscriminatorSpec,
    GeneratorSpec,
    build_discriminator,
    build_generator,
    generator_state,
    role_channels,
)
from .taxonomy import ClassTaxonomy


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    decay_start: int = 100  # linear decay to zero after this epoch
    batch_size: int = 8
    fraction: float = 0.3
    resolution: tuple[int, int] | None = None  # (height, width); None accepts any
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    checkpoint_every: int = 50
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    discriminator: DiscriminatorSpec = field(default_factory=DiscriminatorSpec)
    perceptual: dict | None = None  # boundary-loss extractor config

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if not (0 <= self.decay_start < self.epochs):
            raise ConfigurationError(
                f"decay_start must lie in [0, epochs), got {self.decay_start} of {self.epochs}"
            )
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if not (0.0 < self.fraction <= 1.0):
            raise ConfigurationError(f"fraction must be in (0, 1], got {self.fraction}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "decay_start": self.decay_start,
            "batch_size": self.batch_size,
            "fraction": self.fraction,
            "resolution": list(self.resolution) if self.resolution else None,
            "weights": self.weights.to_dict(),
            "seed": self.seed,
            "checkpoint_every": self.checkpoint_every,
            "generator": self.generator.to_dict(),
            "discriminator": self.discriminator.to_dict(),
            "perceptual": self.perceptual,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "weights" in d:
            d["weights"] = LossWeights.from_dict(d["weights"])
        if "generator" in d:
            d["generator"] = GeneratorSpec.from_dict(d["generator"])
        if "discriminator" in d:
            d["discriminator"] = DiscriminatorSpec.from_dict(d["discriminator"])
        if d.get("resolution"):
            d["resolution"] = tuple(d["resolution"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigurationError(f"malformed training config: {exc}") from exc

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        path = Path(path)
        if path.suffix == ".toml":
            try:
                import tomllib  # Python >= 3.11
            except ModuleNotFoundError:
                import tomli as tomllib
            data = tomllib.loads(path.read_text())
        else:
            data = json.loads(path.read_text())
        return cls.from_dict(data)


def lr_for_epoch(config: TrainConfig, epoch: int) -> float:
    """Constant through decay_start, then linear to exactly zero at the last epoch."""
    if epoch < 1 or epoch > config.epochs:
        raise ConfigurationError(f"epoch {epoch} outside [1, {config.epochs}]")
    if epoch <= config.decay_start:
        return config.lr
    return config.lr * (config.epochs - epoch) / (config.epochs - config.decay_start)


@dataclass
class TrainResult:
    checkpoint_path: Path
    log_path: Path
    history: list[dict]


# ---------------------------------------------------------------------------
# batch construction
# ---------------------------------------------------------------------------

def build_example_tensors(role: str, pair: ScenePair, taxonomy: ClassTaxonomy):
    """(input volume, target volume) for one training pair, as numpy arrays."""
    if role == "stage1":
        x = encode_one_hot(pair.sparse, taxonomy, THINGS_PLUS_NONE).data
        y = encode_stuff_planes(pair.dense, taxonomy).data
    elif role == "stage2":
        stuffs = encode_stuff_planes(pair.dense, taxonomy)
        x = overlay(stuffs, pair.sparse, taxonomy).data
        y = encode_one_hot(to_sparse_things(pair.dense, taxonomy), taxonomy, THINGS_PLUS_NONE).data
    elif role == "single_stage":
        x = embed_sparse_all(pair.sparse, taxonomy).data
        y = encode_one_hot(pair.dense, taxonomy, ALL).data
    elif role == "boundary":
        x = encode_one_hot(pair.dense, taxonomy, ALL).data
        b = extract_boundaries(pair.instances).data.astype(np.float32)
        y = np.stack([1.0 - b, b])
    else:
        raise ConfigurationError(f"unknown role {role!r}; expected one of {ROLES}")
    return np.asarray(x), np.asarray(y)


def _batch(role: str, pairs: list[ScenePair], taxonomy: ClassTaxonomy):
    xs, ys = zip(*(build_example_tensors(role, p, taxonomy) for p in pairs))
    return torch.from_numpy(np.stack(xs)), torch.from_numpy(np.stack(ys))


def _check_resolution(dataset: list[SceneExample], config: TrainConfig) -> None:
    if config.resolution is None:
        return
    for ex in dataset:
        if ex.dense.shape != tuple(config.resolution):
            raise ConfigurationError(
                f"{ex.source_id}: shape {ex.dense.shape} != configured resolution "
                f"{tuple(config.resolution)}"
            )


# ---------------------------------------------------------------------------
# the loop
# ---------------------------------------------------------------------------

def train_stage(
    role: str,
    dataset: list[SceneExample],
    taxonomy: ClassTaxonomy,
    config: TrainConfig,
    out_dir,
    resume_from=None,
) -> TrainResult:
    """Alternating generator/discriminator optimization for one role.

    Writes a JSON-lines metric log (one record per epoch) and periodic
    checkpoints to ``out_dir``; returns the final checkpoint path, the log
    path, and the in-memory epoch history. Aborts with a diagnostic snapshot
    on a non-finite loss.
    """
    if role not in ROLES:
        raise ConfigurationError(f"unknown role {role!r}; expected one of {ROLES}")
    if not dataset:
        raise TrainingError("dataset is empty")
    _check_resolution(dataset, config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / f"{role}.ckpt"
    log_path = out_dir / f"{role}-train.jsonl"

    in_ch, out_ch = role_channels(role, taxonomy)
    start_epoch = 1
    if resume_from is None:
        torch.manual_seed(config.seed)
        gen = build_generator(config.generator, role, taxonomy)
        disc = build_discriminator(config.discriminator, in_ch + out_ch)
        opt_g = torch.optim.Adam(gen.parameters(), lr=config.lr, betas=(config.beta1, config.beta2))
        opt_d = torch.optim.Adam(disc.parameters(), lr=config.lr, betas=(config.beta1, config.beta2))
        log_mode = "w"
    else:
        state = _load_training_state(resume_from, taxonomy)
        _check_resumable(state, role, config)
        gen = build_generator(GeneratorSpec.from_dict(state["generator"]["spec"]), role, taxonomy)
        gen.load_state_dict(state["generator"]["state_dict"])
        disc = build_discriminator(
            DiscriminatorSpec.from_dict(state["discriminator"]["spec"]),
            state["discriminator"]["in_channels"],
        )
        disc.load_state_dict(state["discriminator"]["state_dict"])
        opt_g = torch.optim.Adam(gen.parameters(), lr=config.lr, betas=(config.beta1, config.beta2))
        opt_d = torch.optim.Adam(disc.parameters(), lr=config.lr, betas=(config.beta1, config.beta2))
        opt_g.load_state_dict(state["opt_g"])
        opt_d.load_state_dict(state["opt_d"])
        torch.set_rng_state(state["torch_rng"])
        start_epoch = state["epoch"] + 1
        log_mode = "a"

    extractor = build_perceptual_extractor(config.perceptual) if role == "boundary" else None
    gen.train()
    disc.train()
    history: list[dict] = []

    def save_checkpoint(epoch: int, path: Path) -> None:
        payload = {
            "kind": "training",
            "role": role,
            "epoch": epoch,
            "generator": generator_state(gen, taxonomy),
            "discriminator": {
                "spec": config.discriminator.to_dict(),
                "in_channels": in_ch + out_ch,
                "state_dict": disc.state_dict(),
            },
            "opt_g": opt_g.state_dict(),
            "opt_d": opt_d.state_dict(),
            "torch_rng": torch.get_rng_state(),
            "config": config.to_dict(),
            "fingerprint": taxonomy.fingerprint(),
        }
        try:
            torch.save(payload, path)
        except OSError as exc:
            raise TrainingError(f"cannot write checkpoint {path}: {exc}") from exc

    with open(log_path, log_mode) as log:
        for epoch in range(start_epoch, config.epochs + 1):
            lr = lr_for_epoch(config, epoch)
            for group in opt_g.param_groups + opt_d.param_groups:
                group["lr"] = lr

            pairs = list(epoch_iterator(dataset, taxonomy, config.fraction, epoch, config.seed))
            order = np.random.default_rng(derive_seed(config.seed, epoch, "order")).permutation(len(pairs))
            pairs = [pairs[i] for i in order]

            sums = {"g_adv": 0.0, "g_focal": 0.0, "g_fm": 0.0, "g_vgg": 0.0, "g_total": 0.0, "d_loss": 0.0}
            seen = 0
            for i in range(0, len(pairs), config.batch_size):
                chunk = pairs[i:i + config.batch_size]
                x, y = _batch(role, chunk, taxonomy)

                # generator step
                fake = gen(x)
                conditioned = lambda v: disc(torch.cat([x, v], dim=1))  # noqa: E731
                if role == "boundary":
                    report = composite_bd_loss(fake, y, conditioned, extractor, config.weights)
                else:
                    report = composite_oc_loss(fake, y, conditioned, config.weights)
                opt_g.zero_grad()
                opt_d.zero_grad()
                report.tensor.backward()
                opt_g.step()

                # discriminator step
                real_scores = [s for s, _ in disc(torch.cat([x, y], dim=1))]
                fake_scores = [s for s, _ in disc(torch.cat([x, fake.detach()], dim=1))]
                d_loss, _ = lsgan_losses(real_scores, fake_scores)
                opt_d.zero_grad()
                d_loss.backward()
                opt_d.step()

                n = len(chunk)
                seen += n
                sums["g_adv"] += report.adv * n
                sums["g_focal"] += report.focal * n
                sums["g_fm"] += report.feature_match * n
                sums["g_vgg"] += report.perceptual * n
                sums["g_total"] += report.total * n
                sums["d_loss"] += float(d_loss.detach()) * n

            record = {"epoch": epoch, "lr": lr}
            record.update({k: v / seen for k, v in sums.items()})
            if not all(np.isfinite(v) for v in record.values()):
                snapshot = out_dir / f"{role}-diagnostic.pt"
                save_checkpoint(epoch, snapshot)
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}: {record}; snapshot at {snapshot}"
                )
            history.append(record)
            log.write(json.dumps(record) + "\n")
            log.flush()

            if epoch % config.checkpoint_every == 0:
                save_checkpoint(epoch, out_dir / f"{role}-epoch{epoch:04d}.ckpt")
            if epoch == config.epochs:
                save_checkpoint(epoch, ckpt_path)

    gen.eval()
    return TrainResult(ckpt_path, log_path, history)


def _load_training_state(path, taxonomy: ClassTaxonomy) -> dict:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint {path} does not exist")
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if state.get("kind") != "training":
        raise CheckpointError(f"{path} is not a training checkpoint")
    if state.get("fingerprint") != taxonomy.fingerprint():
        raise CheckpointError(
            "taxonomy fingerprint mismatch: checkpoint belongs to a different taxonomy"
        )
    return state


_RESUME_FIELDS = ("epochs", "lr", "beta1", "beta2", "decay_start", "batch_size",
                  "fraction", "seed", "weights", "generator", "discriminator")


def _check_resumable(state: dict, role: str, config: TrainConfig) -> None:
    if state["role"] != role:
        raise CheckpointError(f"checkpoint role {state['role']!r} != requested {role!r}")
    saved = state["config"]
    current = config.to_dict()
    for field_name in _RESUME_FIELDS:
        if saved.get(field_name) != current.get(field_name):
            raise CheckpointError(
                f"config field {field_name!r} changed since checkpoint: "
                f"{saved.get(field_name)!r} -> {current.get(field_name)!r}"
            )
    if state["epoch"] >= config.epochs:
        raise CheckpointError(
            f"checkpoint already at epoch {state['epoch']} of {config.epochs}; nothing to resume"
        )


def resume(
    checkpoint_path,
    dataset: list[SceneExample],
    taxonomy: ClassTaxonomy,
    config: TrainConfig,
    out_dir,
) -> TrainResult:
    """Continue a run from its training checkpoint.

    Epoch counter, optimizer moments, RNG state, and the learning-rate
    schedule position are restored exactly, so a split run reproduces an
    unbroken one.
    """
    state = _load_training_state(checkpoint_path, taxonomy)
    return train_stage(state["role"], dataset, taxonomy, config, out_dir, resume_from=checkpoint_path)
