"""Image-quality metrics for reconstruction evaluation.

All functions take 2-D float arrays on a common value range (default [0, 1])
and compute in float64.  Reports carry per-item values and arithmetic means;
correlation is undefined for constant images, so those items are excluded
from the NCC mean and counted instead of silently averaged.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .errors import EmptySet, ImageTooSmall, ShapeMismatch, ZeroVariance

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

PSNR_CAP_DB = 100.0  # reported for a zero-error pair, where the ratio diverges


def _paired(a, b) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeMismatch(f"shapes differ: {x.shape} vs {y.shape}")
    return x, y


def mse(a, b) -> float:
    x, y = _paired(a, b)
    return float(np.mean((x - y) ** 2))


def rmse(a, b) -> float:
    return math.sqrt(mse(a, b))


def mae(a, b) -> float:
    x, y = _paired(a, b)
    return float(np.mean(np.abs(x - y)))


def psnr(a, b, max_val: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; identical images report the 100 dB cap."""
    err = mse(a, b)
    if err == 0.0:
        return PSNR_CAP_DB
    return 10.0 * math.log10(max_val * max_val / err)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    r = size // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def ssim(a, b, max_val: float = 1.0) -> float:
    """Mean structural similarity over all fully-valid 11x11 Gaussian windows.

    Local statistics are Gaussian-weighted (sigma 1.5) and the map is only
    evaluated where the window fits entirely inside the image, so no padding
    policy leaks into the score.  ssim(x, x) == 1 exactly.
    """
    x, y = _paired(a, b)
    if x.ndim != 2:
        raise ShapeMismatch(f"ssim expects 2-D images, got {x.ndim}-D")
    if min(x.shape) < SSIM_WINDOW:
        raise ImageTooSmall(
            f"image {x.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} ssim window"
        )
    k1 = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    kernel = np.outer(k1, k1)

    def blur(img):
        return convolve2d(img, kernel, mode="valid")

    ux = blur(x)
    uy = blur(y)
    uxx = blur(x * x)
    uyy = blur(y * y)
    uxy = blur(x * y)
    vx = uxx - ux * ux
    vy = uyy - uy * uy
    vxy = uxy - ux * uy

    c1 = (SSIM_K1 * max_val) ** 2
    c2 = (SSIM_K2 * max_val) ** 2
    s = ((2 * ux * uy + c1) * (2 * vxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
    return float(s.mean())


def ncc(a, b) -> float:
    """Zero-mean normalized cross-correlation (Pearson r over pixels).

    Invariant to positive affine rescaling of either image.  Raises
    ZeroVariance when either image is constant: correlation is undefined there.
    """
    x, y = _paired(a, b)
    dx = x - x.mean()
    dy = y - y.mean()
    denom_x = float(np.sum(dx * dx))
    denom_y = float(np.sum(dy * dy))
    if denom_x == 0.0 or denom_y == 0.0:
        which = "first" if denom_x == 0.0 else "second"
        raise ZeroVariance(f"{which} image is constant; correlation undefined")
    return float(np.sum(dx * dy) / math.sqrt(denom_x * denom_y))


@dataclass(frozen=True)
class ItemMetrics:
    index: int
    mse: float
    rmse: float
    mae: float
    psnr: float
    ssim: float
    ncc: float | None  # None when either image is constant

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "mse": self.mse,
            "rmse": self.rmse,
            "mae": self.mae,
            "psnr": self.psnr,
            "ssim": self.ssim,
            "ncc": self.ncc,
        }


@dataclass(frozen=True)
class MetricReport:
    """Per-item metrics plus arithmetic means of the per-item values."""

    items: list[ItemMetrics]
    mean_mse: float
    mean_rmse: float
    mean_mae: float
    mean_psnr: float
    mean_ssim: float
    mean_ncc: float | None
    ncc_defined: int

    @property
    def n_items(self) -> int:
        return len(self.items)

    def to_dict(self) -> dict:
        return {
            "n_items": self.n_items,
            "mean_mse": self.mean_mse,
            "mean_rmse": self.mean_rmse,
            "mean_mae": self.mean_mae,
            "mean_psnr": self.mean_psnr,
            "mean_ssim": self.mean_ssim,
            "mean_ncc": self.mean_ncc,
            "ncc_defined": self.ncc_defined,
        }


def evaluate_pair(a, b, *, index: int = 0, max_val: float = 1.0) -> ItemMetrics:
    try:
        corr = ncc(a, b)
    except ZeroVariance:
        corr = None
    return ItemMetrics(
        index=index,
        mse=mse(a, b),
        rmse=rmse(a, b),
        mae=mae(a, b),
        psnr=psnr(a, b, max_val),
        ssim=ssim(a, b, max_val),
        ncc=corr,
    )


def evaluate_pairs(preds, targets, *, max_val: float = 1.0) -> MetricReport:
    """Score aligned prediction/target pairs and average per-item values."""
    preds = list(preds)
    targets = list(targets)
    if len(preds) != len(targets):
        raise ShapeMismatch(f"{len(preds)} predictions vs {len(targets)} targets")
    if not preds:
        raise EmptySet("no prediction/target pairs to evaluate")
    items = [
        evaluate_pair(p, t, index=i, max_val=max_val)
        for i, (p, t) in enumerate(zip(preds, targets))
    ]
    defined = [it.ncc for it in items if it.ncc is not None]
    return MetricReport(
        items=items,
        mean_mse=float(np.mean([it.mse for it in items])),
        mean_rmse=float(np.mean([it.rmse for it in items])),
        mean_mae=float(np.mean([it.mae for it in items])),
        mean_psnr=float(np.mean([it.psnr for it in items])),
        mean_ssim=float(np.mean([it.ssim for it in items])),
        mean_ncc=float(np.mean(defined)) if defined else None,
        ncc_defined=len(defined),
    )


def render_text(report: MetricReport) -> str:
    """Fixed-format summary: stable across runs for identical inputs."""
    lines = [
        f"pairs={report.n_items}",
        f"mse={report.mean_mse:.6f}",
        f"rmse={report.mean_rmse:.6f}",
        f"mae={report.mean_mae:.6f}",
        f"psnr_db={report.mean_psnr:.4f}",
        f"ssim={report.mean_ssim:.6f}",
    ]
    if report.mean_ncc is None:
        lines.append(f"ncc=undefined (0/{report.n_items} items had variance)")
    else:
        lines.append(f"ncc={report.mean_ncc:.6f} ({report.ncc_defined}/{report.n_items} items)")
    return "\n".join(lines)


def render_jsonl(report: MetricReport) -> str:
    """One JSON object per item, then a summary object."""
    rows = [json.dumps(it.to_dict(), sort_keys=True) for it in report.items]
    rows.append(json.dumps({"summary": report.to_dict()}, sort_keys=True))
    return "\n".join(rows)
