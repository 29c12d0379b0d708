"""Evaluation metrics: feature-distribution distance, object co-occurrence
similarity, and segmentation scores.

Accumulating types (feature stats, co-occurrence counts, confusion counts) are
mergeable, so corpora can be processed in parallel shards and combined.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError, MetricError
from .labelmaps import DenseLabelmap, SparseLabelmap
from .taxonomy import ClassTaxonomy

_SYM_TOL = 1e-8


# ---------------------------------------------------------------------------
# feature-distribution distance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureStats:
    """Gaussian fit of an embedded image set: mean, covariance, sample count."""

    mean: np.ndarray
    cov: np.ndarray
    n: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise InvalidInputError(
                f"inconsistent stats shapes: mean {mean.shape}, cov {cov.shape}"
            )
        if self.n < 2:
            raise InvalidInputError("feature stats need at least 2 samples")
        if np.abs(cov - cov.T).max() > _SYM_TOL:
            raise InvalidInputError("covariance must be symmetric within 1e-8")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", (cov + cov.T) / 2.0)

    @property
    def dim(self) -> int:
        return self.mean.size

    def merge(self, other: "FeatureStats") -> "FeatureStats":
        """Combine shard statistics as if computed in one pass."""
        if self.dim != other.dim:
            raise InvalidInputError(f"dimension mismatch: {self.dim} vs {other.dim}")
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = (
            self.cov * (self.n - 1)
            + other.cov * (other.n - 1)
            + np.outer(delta, delta) * (self.n * other.n / n)
        )
        return FeatureStats(mean=mean, cov=m2 / (n - 1), n=n)


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition, eigenvalues clamped at 0."""
    try:
        vals, vecs = np.linalg.eigh(matrix)
    except np.linalg.LinAlgError:
        jitter = 1e-10 * np.eye(matrix.shape[0])
        vals, vecs = np.linalg.eigh(matrix + jitter)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(stats_r: FeatureStats, stats_g: FeatureStats) -> float:
    """||m_r - m_g||^2 + Tr(C_r + C_g - 2 (C_r C_g)^{1/2}).

    The cross term is evaluated through the symmetrized product
    C_r^{1/2} C_g C_r^{1/2}, whose eigenvalues are real and clamped at zero,
    so no imaginary residue can appear. Tiny negative results (>= -1e-6) are
    rounded up to 0.
    """
    if stats_r.dim != stats_g.dim:
        raise InvalidInputError(f"dimension mismatch: {stats_r.dim} vs {stats_g.dim}")
    diff = stats_r.mean - stats_g.mean
    sqrt_r = _psd_sqrt(stats_r.cov)
    inner = sqrt_r @ stats_g.cov @ sqrt_r
    inner = (inner + inner.T) / 2.0
    try:
        cross_vals = np.linalg.eigvalsh(inner)
    except np.linalg.LinAlgError as exc:
        raise MetricError(f"matrix square root did not converge: {exc}") from exc
    trace_sqrt = np.sqrt(np.clip(cross_vals, 0.0, None)).sum()
    value = float(diff @ diff + np.trace(stats_r.cov) + np.trace(stats_g.cov) - 2.0 * trace_sqrt)
    if not np.isfinite(value):
        raise MetricError("feature distance is non-finite; covariance inputs are ill-conditioned")
    if value < -1e-6:
        raise MetricError(f"feature distance {value} is negative beyond tolerance")
    return max(value, 0.0)


def extract_feature_stats(images: Iterable[np.ndarray], extractor) -> FeatureStats:
    """Single-pass mean and unbiased covariance of extracted feature vectors."""
    n = 0
    mean = None
    m2 = None
    for image in images:
        vec = np.asarray(extractor(image), dtype=np.float64)
        if vec.ndim != 1:
            raise InvalidInputError(f"extractor must return a vector, got shape {vec.shape}")
        n += 1
        if mean is None:
            mean = np.zeros(vec.size)
            m2 = np.zeros((vec.size, vec.size))
        delta = vec - mean
        mean += delta / n
        m2 += np.outer(delta, vec - mean)
    if n < 2:
        raise MetricError(f"need at least 2 images to fit feature stats, got {n}")
    return FeatureStats(mean=mean, cov=m2 / (n - 1), n=n)


# ---------------------------------------------------------------------------
# object co-occurrence
# ---------------------------------------------------------------------------

class CooccurrenceTable:
    """Presence counts behind the co-occurrence probability.

    For each class c1, ``n_input[c1]`` counts examples whose *input* contains
    c1; ``n_pair[c1, c2]`` counts, among those, examples whose *output*
    contains c2 while the input contains no c2 (a genuinely new class).
    """

    def __init__(self, class_ids: Sequence[int], n_input: np.ndarray, n_pair: np.ndarray):
        self.class_ids = tuple(int(c) for c in class_ids)
        c = len(self.class_ids)
        n_input = np.asarray(n_input, dtype=np.int64)
        n_pair = np.asarray(n_pair, dtype=np.int64)
        if n_input.shape != (c,) or n_pair.shape != (c, c):
            raise InvalidInputError("count arrays do not match the class list")
        if (n_pair > n_input[:, None]).any() or (n_pair < 0).any() or (n_input < 0).any():
            raise InvalidInputError("invalid counts: need 0 <= N(c1,c2) <= N(c1)")
        self.n_input = n_input
        self.n_pair = n_pair
        self._index = {cid: i for i, cid in enumerate(self.class_ids)}

    @classmethod
    def from_pairs(
        cls,
        pairs: Sequence[tuple[SparseLabelmap, DenseLabelmap]],
        taxonomy: ClassTaxonomy,
    ) -> "CooccurrenceTable":
        class_ids = taxonomy.class_ids
        if not pairs:
            return cls(class_ids, np.zeros(len(class_ids), np.int64),
                       np.zeros((len(class_ids), len(class_ids)), np.int64))
        in_presence = np.zeros((len(pairs), len(class_ids)), dtype=bool)
        out_presence = np.zeros_like(in_presence)
        for row, (sparse, dense) in enumerate(pairs):
            in_ids = np.unique(sparse.data)
            out_ids = np.unique(dense.data)
            for col, cid in enumerate(class_ids):
                in_presence[row, col] = cid in in_ids
                out_presence[row, col] = cid in out_ids
        new_in_output = out_presence & ~in_presence
        n_input = in_presence.sum(axis=0).astype(np.int64)
        n_pair = in_presence.T.astype(np.int64) @ new_in_output.astype(np.int64)
        return cls(class_ids, n_input, n_pair)

    def merge(self, other: "CooccurrenceTable") -> "CooccurrenceTable":
        if self.class_ids != other.class_ids:
            raise InvalidInputError("cannot merge tables over different class lists")
        return CooccurrenceTable(self.class_ids, self.n_input + other.n_input,
                                 self.n_pair + other.n_pair)

    def p_oc(self, c1: int, c2: int) -> float:
        """P(c2 newly appears in the output | c1 present in the input)."""
        i, j = self._index[c1], self._index[c2]
        if self.n_input[i] == 0:
            raise MetricError(f"P_oc undefined: no example contains class {c1} in its input")
        return float(self.n_pair[i, j] / self.n_input[i])


def cooccurrence_similarity(
    train_pairs: Sequence[tuple[SparseLabelmap, DenseLabelmap]],
    gen_pairs: Sequence[tuple[SparseLabelmap, DenseLabelmap]],
    c1: int,
    c2: int,
    taxonomy: ClassTaxonomy,
) -> float:
    """1 - |P_oc^train(c2|c1) - P_oc^gen(c2|c1)|; always in [0, 1]."""
    train_table = CooccurrenceTable.from_pairs(train_pairs, taxonomy)
    gen_table = CooccurrenceTable.from_pairs(gen_pairs, taxonomy)
    return similarity_from_tables(train_table, gen_table, c1, c2)


def similarity_from_tables(
    train_table: CooccurrenceTable, gen_table: CooccurrenceTable, c1: int, c2: int
) -> float:
    try:
        p_train = train_table.p_oc(c1, c2)
    except MetricError as exc:
        raise MetricError(f"train corpus: {exc}") from None
    try:
        p_gen = gen_table.p_oc(c1, c2)
    except MetricError as exc:
        raise MetricError(f"generated corpus: {exc}") from None
    return 1.0 - abs(p_train - p_gen)


# ---------------------------------------------------------------------------
# segmentation scores
# ---------------------------------------------------------------------------

class ConfusionAccumulator:
    """C x C pixel counts of (ground-truth class, predicted class)."""

    def __init__(self, class_ids: Sequence[int], matrix: np.ndarray | None = None):
        self.class_ids = tuple(int(c) for c in class_ids)
        c = len(self.class_ids)
        self.matrix = np.zeros((c, c), dtype=np.int64) if matrix is None else np.asarray(matrix, dtype=np.int64)
        if self.matrix.shape != (c, c) or (self.matrix < 0).any():
            raise InvalidInputError("confusion matrix must be C x C with nonnegative counts")
        self._index = {cid: i for i, cid in enumerate(self.class_ids)}

    @classmethod
    def for_taxonomy(cls, taxonomy: ClassTaxonomy) -> "ConfusionAccumulator":
        return cls(taxonomy.class_ids)

    def add(self, ground_truth: DenseLabelmap, prediction: DenseLabelmap) -> None:
        if ground_truth.shape != prediction.shape:
            raise InvalidInputError(
                f"shape mismatch: gt {ground_truth.shape} vs pred {prediction.shape}"
            )
        c = len(self.class_ids)
        lut = np.full(max(self.class_ids) + 2, -1, dtype=np.int64)
        for cid, idx in self._index.items():
            lut[cid] = idx
        gt = ground_truth.data.ravel()
        pred = prediction.data.ravel()
        if gt.min() < 0 or pred.min() < 0 or gt.max() >= lut.size or pred.max() >= lut.size:
            raise InvalidInputError("labelmap contains class ids outside the accumulator")
        gt_idx, pred_idx = lut[gt], lut[pred]
        if (gt_idx < 0).any() or (pred_idx < 0).any():
            raise InvalidInputError("labelmap contains class ids outside the accumulator")
        flat = gt_idx * c + pred_idx
        self.matrix += np.bincount(flat, minlength=c * c).reshape(c, c)

    def merge(self, other: "ConfusionAccumulator") -> "ConfusionAccumulator":
        if self.class_ids != other.class_ids:
            raise InvalidInputError("cannot merge accumulators over different class lists")
        return ConfusionAccumulator(self.class_ids, self.matrix + other.matrix)


@dataclass(frozen=True)
class SegmentationScores:
    miou: float
    macc: float
    pixel_accuracy: float
    per_class_iou: dict[int, float | None]  # None: class absent from gt and prediction


def segmentation_scores(acc: ConfusionAccumulator) -> SegmentationScores:
    """mIoU / mean class recall / overall pixel accuracy from confusion counts.

    Classes absent from both prediction and ground truth are excluded from the
    IoU mean; classes absent from the ground truth are excluded from mAcc.
    """
    m = acc.matrix
    total = m.sum()
    if total == 0:
        raise MetricError("empty confusion accumulator")
    tp = np.diag(m).astype(np.float64)
    gt_count = m.sum(axis=1).astype(np.float64)
    pred_count = m.sum(axis=0).astype(np.float64)
    union = gt_count + pred_count - tp

    per_class: dict[int, float | None] = {}
    ious = []
    for i, cid in enumerate(acc.class_ids):
        if union[i] == 0:
            per_class[cid] = None
        else:
            iou = float(tp[i] / union[i])
            per_class[cid] = iou
            ious.append(iou)
    recalls = [float(tp[i] / gt_count[i]) for i in range(len(acc.class_ids)) if gt_count[i] > 0]
    return SegmentationScores(
        miou=float(np.mean(ious)) if ious else 0.0,
        macc=float(np.mean(recalls)) if recalls else 0.0,
        pixel_accuracy=float(tp.sum() / total),
        per_class_iou=per_class,
    )
