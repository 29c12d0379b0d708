"""Training objectives: focal, least-squares adversarial, feature matching,
perceptual, and the composite generator losses built from them.

All functions accept torch tensors (numpy arrays are converted) and return
0-dim torch tensors so they can sit directly in an autograd graph. The focal
term inside the composites is normalized by pixel count so the default loss
weights keep their meaning across resolutions; the bare :func:`focal_loss`
returns the raw sum over every element.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import torch

from .errors import InvalidInputError

PROB_EPS = 1e-7  # clamp before logs; saturated sigmoids otherwise hit -inf


@dataclass(frozen=True)
class LossWeights:
    """Coefficients of the composite losses (defaults follow the training recipe)."""

    lambda_fl: float = 5.0
    lambda_fm: float = 10.0  # weight of the discriminator feature term in both composites
    lambda_vgg: float = 10.0
    gamma: float = 5.0

    def __post_init__(self):
        for name in ("lambda_fl", "lambda_fm", "lambda_vgg", "gamma"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "lambda_fl": self.lambda_fl,
            "lambda_fm": self.lambda_fm,
            "lambda_vgg": self.lambda_vgg,
            "gamma": self.gamma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass
class LossReport:
    """Scalar components of one composite evaluation plus the weighted total.

    ``tensor`` carries the differentiable total when the inputs were part of a
    graph; the float fields are detached copies for logging.
    """

    adv: float
    focal: float
    feature_match: float
    perceptual: float
    total: float
    tensor: Optional[torch.Tensor] = field(default=None, repr=False, compare=False)

    def as_dict(self) -> dict:
        return {
            "adv": self.adv,
            "focal": self.focal,
            "feature_match": self.feature_match,
            "perceptual": self.perceptual,
            "total": self.total,
        }


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(x)


# ---------------------------------------------------------------------------
# elementary losses
# ---------------------------------------------------------------------------

def focal_loss(pred, target, gamma: float) -> torch.Tensor:
    """Focal loss summed over every element.

    l(p, y) = -y (1-p)^gamma log p - (1-y) p^gamma log(1-p), with p clamped to
    [eps, 1-eps]. gamma = 0 recovers plain binary cross-entropy.
    """
    p = _as_tensor(pred)
    y = _as_tensor(target).to(p.dtype)
    if p.shape != y.shape:
        raise InvalidInputError(f"shape mismatch: pred {tuple(p.shape)} vs target {tuple(y.shape)}")
    if not bool(((y == 0) | (y == 1)).all()):
        raise InvalidInputError("focal loss target must be binary")
    p = p.clamp(PROB_EPS, 1.0 - PROB_EPS)
    pos = -y * (1.0 - p).pow(gamma) * torch.log(p)
    neg = -(1.0 - y) * p.pow(gamma) * torch.log(1.0 - p)
    return (pos + neg).sum()


def lsgan_losses(
    disc_outputs_real: Sequence[torch.Tensor],
    disc_outputs_fake: Sequence[torch.Tensor],
) -> tuple[torch.Tensor, torch.Tensor]:
    """Least-squares GAN objectives over per-scale score maps.

    d_loss averages ((D(real)-1)^2 + D(fake)^2) / 2 over locations then scales;
    g_loss averages (D(fake)-1)^2 the same way.
    """
    real = [_as_tensor(r) for r in disc_outputs_real]
    fake = [_as_tensor(f) for f in disc_outputs_fake]
    if not real or not fake:
        raise InvalidInputError("lsgan_losses needs at least one discriminator scale")
    if len(real) != len(fake):
        raise InvalidInputError(f"scale count mismatch: {len(real)} real vs {len(fake)} fake")
    d_terms = [(((r - 1.0) ** 2).mean() + (f ** 2).mean()) / 2.0 for r, f in zip(real, fake)]
    g_terms = [((f - 1.0) ** 2).mean() for f in fake]
    return torch.stack(d_terms).mean(), torch.stack(g_terms).mean()


def generator_adversarial_loss(disc_outputs_fake: Sequence[torch.Tensor]) -> torch.Tensor:
    """The generator-side half of the least-squares objective."""
    fake = [_as_tensor(f) for f in disc_outputs_fake]
    if not fake:
        raise InvalidInputError("need at least one discriminator scale")
    return torch.stack([((f - 1.0) ** 2).mean() for f in fake]).mean()


def feature_matching_loss(real_features, fake_features) -> torch.Tensor:
    """Mean absolute difference of discriminator features, averaged over
    layers then scales. Zero iff the feature lists are identical."""
    if len(real_features) != len(fake_features) or not real_features:
        raise InvalidInputError(
            f"scale count mismatch or empty: {len(real_features)} vs {len(fake_features)}"
        )
    per_scale = []
    for scale, (reals, fakes) in enumerate(zip(real_features, fake_features)):
        if len(reals) != len(fakes) or not reals:
            raise InvalidInputError(f"layer count mismatch at scale {scale}")
        layer_terms = []
        for r, f in zip(reals, fakes):
            r, f = _as_tensor(r), _as_tensor(f)
            if r.shape != f.shape:
                raise InvalidInputError(
                    f"feature shape mismatch at scale {scale}: {tuple(r.shape)} vs {tuple(f.shape)}"
                )
            layer_terms.append((r - f).abs().mean())
        per_scale.append(torch.stack(layer_terms).mean())
    return torch.stack(per_scale).mean()


def replicate_to_rgb(single: torch.Tensor) -> torch.Tensor:
    """Stack a single-channel map into a 3-channel batch item (N, 3, H, W)."""
    t = _as_tensor(single)
    if t.dim() == 2:
        t = t[None]
    if t.dim() == 3:  # (N, H, W)
        t = t[:, None]
    if t.dim() != 4 or t.shape[1] != 1:
        raise InvalidInputError(f"expected single-channel maps, got shape {tuple(t.shape)}")
    return t.expand(-1, 3, -1, -1)


def feature_l1(a: torch.Tensor, b: torch.Tensor, extractor, layer_weights=None) -> torch.Tensor:
    """Weighted mean absolute feature difference between two 3-channel batches."""
    feats_a = extractor(a)
    feats_b = extractor(b)
    if len(feats_a) != len(feats_b) or not feats_a:
        raise InvalidInputError("extractor returned mismatched or empty feature lists")
    if layer_weights is None:
        layer_weights = getattr(extractor, "layer_weights", None)
    if layer_weights is None:
        layer_weights = [1.0] * len(feats_a)
    if len(layer_weights) != len(feats_a):
        raise InvalidInputError("layer_weights arity does not match extractor output")
    terms = [w * (fa - fb).abs().mean() for w, fa, fb in zip(layer_weights, feats_a, feats_b)]
    return torch.stack(terms).sum() / sum(layer_weights)


def perceptual_loss(b_star, b, extractor, layer_weights=None) -> torch.Tensor:
    """Feature-space distance between two boundary maps.

    Each map is replicated to 3 channels before being fed to the extractor,
    which must return a fixed list of feature volumes. With the identity
    extractor this reduces to mean |b_star - b|.
    """
    a = replicate_to_rgb(_as_tensor(b_star).float())
    c = replicate_to_rgb(_as_tensor(b).float())
    if a.shape != c.shape:
        raise InvalidInputError(f"shape mismatch: {tuple(a.shape)} vs {tuple(c.shape)}")
    try:
        return feature_l1(a, c, extractor, layer_weights)
    except InvalidInputError:
        raise
    except Exception as exc:
        raise InvalidInputError(f"perceptual feature extractor failed: {exc}") from exc


# ---------------------------------------------------------------------------
# composites
# ---------------------------------------------------------------------------

def _float(x) -> float:
    return float(x.detach()) if isinstance(x, torch.Tensor) else float(x)


def combine_oc(adv, focal, feature_match, weights: LossWeights) -> LossReport:
    """total = adv + lambda_fl * focal + lambda_fm * feature_match."""
    total = adv + weights.lambda_fl * focal + weights.lambda_fm * feature_match
    return LossReport(
        adv=_float(adv),
        focal=_float(focal),
        feature_match=_float(feature_match),
        perceptual=0.0,
        total=_float(total),
        tensor=total if isinstance(total, torch.Tensor) else None,
    )


def combine_bd(adv, focal, feature_match, perceptual, weights: LossWeights) -> LossReport:
    """total = adv + lambda_fl * focal + lambda_fm * feature_match + lambda_vgg * perceptual."""
    total = (
        adv
        + weights.lambda_fl * focal
        + weights.lambda_fm * feature_match
        + weights.lambda_vgg * perceptual
    )
    return LossReport(
        adv=_float(adv),
        focal=_float(focal),
        feature_match=_float(feature_match),
        perceptual=_float(perceptual),
        total=_float(total),
        tensor=total if isinstance(total, torch.Tensor) else None,
    )


def _pixel_count(t: torch.Tensor) -> int:
    # every dim except the channel axis, so weights stay comparable across
    # resolutions and batch sizes
    if t.dim() == 3:
        return t.shape[1] * t.shape[2]
    if t.dim() == 4:
        return t.shape[0] * t.shape[2] * t.shape[3]
    raise InvalidInputError(f"expected (C,H,W) or (N,C,H,W), got shape {tuple(t.shape)}")


def _disc_scores_and_features(disc_out):
    scores = [score for score, _ in disc_out]
    features = [feats for _, feats in disc_out]
    return scores, features


def composite_oc_loss(g_star, g, disc, weights: LossWeights) -> LossReport:
    """Generator objective for labelmap completion: adversarial + focal +
    discriminator feature matching.

    ``disc`` maps a volume to per-scale (score, features) pairs and is assumed
    to already be bound to its conditioning input. The real branch is treated
    as a constant.
    """
    g_star_t = _as_tensor(g_star)
    g_t = _as_tensor(g).to(g_star_t.dtype)
    fake_scores, fake_feats = _disc_scores_and_features(disc(g_star_t))
    with torch.no_grad():
        _, real_feats = _disc_scores_and_features(disc(g_t))
    adv = generator_adversarial_loss(fake_scores)
    focal = focal_loss(g_star_t, g_t, weights.gamma) / _pixel_count(g_star_t)
    fm = feature_matching_loss(real_feats, fake_feats)
    return combine_oc(adv, focal, fm, weights)


def composite_bd_loss(b_star, b, disc, extractor, weights: LossWeights) -> LossReport:
    """Generator objective for boundary maps: the completion objective plus a
    perceptual feature term on the boundary channel (convention: channel 0 is
    background, channel 1 is boundary)."""
    b_star_t = _as_tensor(b_star)
    b_t = _as_tensor(b).to(b_star_t.dtype)
    if b_star_t.shape != b_t.shape:
        raise InvalidInputError(
            f"shape mismatch: {tuple(b_star_t.shape)} vs {tuple(b_t.shape)}"
        )
    fake_scores, fake_feats = _disc_scores_and_features(disc(b_star_t))
    with torch.no_grad():
        _, real_feats = _disc_scores_and_features(disc(b_t))
    adv = generator_adversarial_loss(fake_scores)
    focal = focal_loss(b_star_t, b_t, weights.gamma) / _pixel_count(b_star_t)
    fm = feature_matching_loss(real_feats, fake_feats)
    boundary_channel = b_star_t[..., 1, :, :]
    boundary_target = b_t[..., 1, :, :]
    vgg = perceptual_loss(boundary_channel, boundary_target, extractor)
    return combine_bd(adv, focal, fm, vgg, weights)
