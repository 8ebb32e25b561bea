"""Quantitative surfaces: IoU, boundary F1, spectral energy, total
variation, and a kernel two-sample discrepancy."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter

from ielkit.errors import DataError, UsageError
from ielkit.grids import as_grid, as_label_grid


def confusion_matrix(pred, gt, n_classes: int) -> np.ndarray:
    """C x C counts; entry (i, j) = pixels with ground truth i predicted j."""
    p = as_label_grid(pred, n_classes, "pred")
    g = as_label_grid(gt, n_classes, "gt")
    if p.shape != g.shape:
        raise DataError(f"pred {p.shape} and gt {g.shape} differ in shape")
    idx = g.reshape(-1) * n_classes + p.reshape(-1)
    return np.bincount(idx, minlength=n_classes**2).reshape(n_classes, n_classes)


def miou_from_confusion(cm: np.ndarray) -> tuple[np.ndarray, float]:
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    denom = tp + fp + fn
    present = denom > 0
    iou = np.full(cm.shape[0], np.nan)
    iou[present] = tp[present] / denom[present]
    mean = float(iou[present].mean()) if present.any() else float("nan")
    return iou, mean


def miou(pred, gt, n_classes: int) -> tuple[np.ndarray, float]:
    """Per-class IoU (nan for classes absent from both grids) and the mean
    over the present classes."""
    return miou_from_confusion(confusion_matrix(pred, gt, n_classes))


def _boundary_mask(labels: np.ndarray) -> np.ndarray:
    """Pixels with at least one 4-neighbor of a different class."""
    b = np.zeros(labels.shape, dtype=bool)
    b[:-1, :] |= labels[:-1, :] != labels[1:, :]
    b[1:, :] |= labels[1:, :] != labels[:-1, :]
    b[:, :-1] |= labels[:, :-1] != labels[:, 1:]
    b[:, 1:] |= labels[:, 1:] != labels[:, :-1]
    return b


def boundary_f1(pred, gt, tolerance_px: int = 1) -> float:
    """F1 of boundary pixels matched within Chebyshev distance <= tolerance."""
    p = as_label_grid(pred, name="pred")
    g = as_label_grid(gt, name="gt")
    if p.shape != g.shape:
        raise DataError(f"pred {p.shape} and gt {g.shape} differ in shape")
    bp, bg = _boundary_mask(p), _boundary_mask(g)
    if not bp.any() and not bg.any():
        return 1.0
    if not bp.any() or not bg.any():
        return 0.0
    size = 2 * tolerance_px + 1
    near_g = maximum_filter(bg.astype(np.uint8), size=size).astype(bool)
    near_p = maximum_filter(bp.astype(np.uint8), size=size).astype(bool)
    precision = float(near_g[bp].mean())
    recall = float(near_p[bg].mean())
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _centered_freq_dist(h: int, w: int) -> np.ndarray:
    k = np.fft.fftfreq(h) * h  # signed integer frequencies
    l = np.fft.fftfreq(w) * w
    return np.hypot(k[:, None], l[None, :])


def spectral_energy_split(field, radius_fraction: float) -> tuple[float, float]:
    """(total, high-frequency) spectral energy of a grid.

    High frequency = outside the centered disc of radius
    radius_fraction * min(H, W) / 2 (DC inside the disc).
    """
    x = as_grid(field, "field")
    _, h, w = x.shape
    z = np.fft.fft2(x, axes=(-2, -1))
    energy = np.abs(z) ** 2
    inside = _centered_freq_dist(h, w) <= radius_fraction * min(h, w) / 2.0
    total = float(energy.sum())
    low = float(energy[:, inside].sum())
    return total, total - low


def high_freq_energy_ratio(field, radius_fraction: float = 0.5) -> float:
    """Share of spectral energy outside the low-frequency disc, in [0, 1]."""
    if not (0.0 < radius_fraction < 1.0):
        raise UsageError(f"radius_fraction must be in (0, 1), got {radius_fraction}")
    total, high = spectral_energy_split(field, radius_fraction)
    if total == 0.0:
        return 0.0
    return high / total


def total_variation(field) -> float:
    """Sum of absolute first differences, both axes, all channels."""
    x = as_grid(field, "field")
    return float(
        np.abs(np.diff(x, axis=1)).sum() + np.abs(np.diff(x, axis=2)).sum()
    )


def median_bandwidth(vectors: np.ndarray) -> float:
    """Median pairwise Euclidean distance heuristic; 1.0 if degenerate."""
    n = len(vectors)
    if n < 2:
        return 1.0
    d2 = ((vectors[:, None, :] - vectors[None, :, :]) ** 2).sum(axis=-1)
    tri = d2[np.triu_indices(n, k=1)]
    med = float(np.sqrt(np.median(tri)))
    return med if med > 0.0 else 1.0


def mmd(set_a, set_b, bandwidth: float | None = None) -> float:
    """Squared kernel maximum mean discrepancy with a Gaussian kernel.

    Diagonal terms are excluded everywhere, so equal-size sets use the
    standard unbiased estimator and identical sets give exactly zero;
    with unequal sizes the cross term averages over all pairs.  The
    estimate can dip microscopically negative; report-level consumers
    clamp, the raw value here does not.
    """
    a = np.asarray(set_a, dtype=np.float64)
    b = np.asarray(set_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or len(a) == 0 or len(b) == 0:
        raise UsageError("mmd needs two non-empty sets of equal-dimension vectors")
    if a.shape[1] != b.shape[1]:
        raise UsageError(f"vector dims differ: {a.shape[1]} vs {b.shape[1]}")
    if bandwidth is None:
        bandwidth = median_bandwidth(np.concatenate([a, b], axis=0))
    if bandwidth <= 0:
        raise UsageError(f"bandwidth must be positive, got {bandwidth}")

    def kernel(x, y):
        d2 = ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=-1)
        return np.exp(-d2 / (2.0 * bandwidth**2))

    m, n = len(a), len(b)
    kaa, kbb, kab = kernel(a, a), kernel(b, b), kernel(a, b)
    term_a = (kaa.sum() - np.trace(kaa)) / (m * (m - 1)) if m > 1 else 0.0
    term_b = (kbb.sum() - np.trace(kbb)) / (n * (n - 1)) if n > 1 else 0.0
    if m == n:
        cross = (kab.sum() - np.trace(kab)) / (m * (m - 1)) if m > 1 else 0.0
    else:
        cross = kab.sum() / (m * n)
    return float(term_a + term_b - 2.0 * cross)


def embed_gray_pool(image) -> np.ndarray:
    """Default embedding for image-set discrepancy: channel-mean grayscale
    average-pooled to 8x8 and flattened to 64 dims."""
    x = as_grid(image, "image")
    _, h, w = x.shape
    if h % 8 or w % 8:
        raise UsageError(f"image sides must be divisible by 8, got {h}x{w}")
    gray = x.mean(axis=0)
    pooled = gray.reshape(8, h // 8, 8, w // 8).mean(axis=(1, 3))
    return pooled.reshape(-1)


@dataclass
class MetricsReport:
    """Aggregate quality report for one evaluated set."""

    per_class_iou: np.ndarray
    miou: float
    boundary_f1: float
    high_freq_ratio: float
    mmd_value: float | None = None

    def clamped_mmd(self) -> float | None:
        if self.mmd_value is None:
            return None
        return max(self.mmd_value, 0.0)

    def summary(self) -> str:
        lines = [
            f"mIoU            {self.miou:.4f}",
            f"boundary F1     {self.boundary_f1:.4f}",
            f"high-freq ratio {self.high_freq_ratio:.4f}",
        ]
        if self.mmd_value is not None:
            lines.append(f"MMD             {self.clamped_mmd():.6f}")
        per = ", ".join(
            "-" if np.isnan(v) else f"{v:.3f}" for v in self.per_class_iou
        )
        lines.append(f"per-class IoU   [{per}]")
        return "\n".join(lines)


def write_report_csv(path, rows: list[dict], aggregate: dict) -> None:
    """One row per sample plus a final aggregate row."""
    fields = list(rows[0].keys()) if rows else list(aggregate.keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
        writer.writerow(aggregate)
