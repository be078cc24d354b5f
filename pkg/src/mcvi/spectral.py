"""Vegetation-index and texture-feature computation from 5-band plot rasters.

Bands are reflectance images keyed R, G, B, RE, NIR. Eleven index images
are derived per plot (fixed channel order below); histogram/moment texture
descriptors and a saturation report support plot-level analysis.

On-disk conventions:
  band directory    <plot>/{R,G,B,RE,NIR}.f32 + meta.json
  VI cache directory <plot>/{CIgreen,...,VARI}.f32 + meta.json
with .f32 = little-endian float32, row-major.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BAND_NAMES = ("R", "G", "B", "RE", "NIR")

# fixed channel order of a VIStack
VI_NAMES = ("CIgreen", "DVI", "EVI", "GNDVI", "MCARI", "NDRE",
            "NDVI", "OSAVI", "RVI", "SAVI", "VARI")

# guard added to every denominator: bare-soil pixels can zero them out
EPS_DIV = 1e-8

# normalized-difference style indices are clamped to their analytic range;
# open-ended ones are clipped so downstream batch-norm statistics stay bounded
_RANGE_CLAMP = {"NDVI": (-1.0, 1.0), "GNDVI": (-1.0, 1.0), "NDRE": (-1.0, 1.0),
                "VARI": (-1.0, 1.0), "DVI": (-1.5, 1.5)}
_WIDE_CLIP = {"RVI": (-10.0, 10.0), "CIgreen": (-10.0, 10.0),
              "MCARI": (-10.0, 10.0), "EVI": (-10.0, 10.0)}

REFLECTANCE_MAX = 1.5


@dataclass
class BandStack:
    """Five co-registered reflectance rasters for one plot."""

    bands: dict[str, np.ndarray]
    plot_id: str
    acquisition_date: str = ""
    stage: str = ""

    def __post_init__(self):
        missing = [b for b in BAND_NAMES if b not in self.bands]
        if missing:
            raise ValueError(f"missing bands: {missing}")
        shapes = {self.bands[b].shape for b in BAND_NAMES}
        if len(shapes) != 1:
            raise ValueError(f"band shapes differ: {shapes}")
        for b in BAND_NAMES:
            arr = np.asarray(self.bands[b], dtype=np.float64)
            if not np.isfinite(arr).all():
                raise ValueError(f"band {b} contains non-finite values")
            self.bands[b] = arr

    @property
    def shape(self):
        return self.bands["R"].shape


@dataclass
class VIStack:
    """The 11 index rasters, [11, H, W], in VI_NAMES order."""

    channels: np.ndarray
    plot_id: str = ""
    stage: str = ""

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float64)
        if self.channels.ndim != 3 or self.channels.shape[0] != len(VI_NAMES):
            raise ValueError(f"expected [11, H, W] channels, got {self.channels.shape}")

    def channel(self, name: str) -> np.ndarray:
        return self.channels[VI_NAMES.index(name)]


@dataclass
class TextureFeatures:
    mean: float
    std: float
    smoothness: float
    third_moment: float
    uniformity: float
    entropy: float

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in
                ("mean", "std", "smoothness", "third_moment", "uniformity", "entropy")}


# -- index formulas ----------------------------------------------------------

def _div(num, den):
    return num / (den + EPS_DIV)


def _vi_formula(name: str, b: dict[str, np.ndarray]) -> np.ndarray:
    r, g, bl, re, nir = b["R"], b["G"], b["B"], b["RE"], b["NIR"]
    if name == "CIgreen":
        return _div(nir, g) - 1.0
    if name == "DVI":
        return nir - r
    if name == "EVI":
        return _div(2.5 * (nir - r), nir + 6.0 * r - 7.5 * bl + 1.0)
    if name == "GNDVI":
        return _div(nir - g, nir + g)
    if name == "MCARI":
        return _div(re * (re - r - 0.2 * (re - g)), r)
    if name == "NDRE":
        return _div(nir - re, nir + re)
    if name == "NDVI":
        return _div(nir - r, nir + r)
    if name == "OSAVI":
        return _div(1.16 * (nir - r), nir + r + 0.16)
    if name == "RVI":
        return _div(nir, r)
    if name == "SAVI":
        return _div(1.5 * (nir - r), nir + r + 0.5)
    if name == "VARI":
        return _div(g - r, g + r - bl)
    raise KeyError(f"unknown vegetation index '{name}'")


def compute_vi(bands: BandStack, index: str) -> np.ndarray:
    """One index raster; division guarded, range clamped per index."""
    raster = _vi_formula(index, bands.bands)
    lo_hi = _RANGE_CLAMP.get(index) or _WIDE_CLIP.get(index)
    if lo_hi is not None:
        raster = np.clip(raster, *lo_hi)
    if not np.isfinite(raster).all():
        raise FloatingPointError(f"non-finite {index} raster for plot {bands.plot_id}")
    return raster


def compute_vi_stack(bands: BandStack) -> VIStack:
    channels = np.stack([compute_vi(bands, name) for name in VI_NAMES])
    return VIStack(channels, plot_id=bands.plot_id, stage=bands.stage)


def plot_mean_vi(stack: VIStack) -> np.ndarray:
    """Per-channel arithmetic mean over pixels, length 11."""
    return stack.channels.mean(axis=(1, 2))


# -- texture features ----------------------------------------------------------

def texture_features(raster: np.ndarray, num_bins: int = 64) -> TextureFeatures:
    """Histogram/moment descriptors of one raster.

    Central moments use the population (1/N) convention; uniformity and
    entropy come from a ``num_bins``-bin histogram over the raster's own
    [min, max] range with 0*ln(0) treated as 0.
    """
    raster = np.asarray(raster, dtype=np.float64)
    if raster.size == 0:
        raise ValueError("empty raster")
    if not np.isfinite(raster).all():
        raise ValueError("raster contains non-finite values")
    if num_bins < 2:
        raise ValueError("num_bins must be >= 2")

    mu = raster.mean()
    var = ((raster - mu) ** 2).mean()
    std = float(np.sqrt(var))
    smoothness = 1.0 - 1.0 / (1.0 + var)
    third = ((raster - mu) ** 3).mean()

    lo, hi = raster.min(), raster.max()
    if lo == hi:
        p = np.array([1.0])
    else:
        counts, _ = np.histogram(raster, bins=num_bins, range=(lo, hi))
        p = counts / counts.sum()
    uniformity = float((p ** 2).sum())
    nz = p[p > 0]
    entropy = float(-(nz * np.log(nz)).sum())

    return TextureFeatures(float(mu), std, float(smoothness), float(third),
                           uniformity, entropy)


# -- saturation diagnostics ------------------------------------------------------

def saturation_report(samples: list[VIStack], vi: str, threshold: float) -> dict:
    """Dispersion of per-plot means vs per-plot pixel STDs above a VI threshold.

    Selects plots whose mean ``vi`` exceeds ``threshold`` and reports the
    fraction selected plus the coefficient of variation (std/mean, in %) of
    the selected plots' means and of their pixel standard deviations.
    """
    if len(samples) < 2:
        raise ValueError("need at least 2 plots")
    if vi not in VI_NAMES:
        raise KeyError(f"unknown vegetation index '{vi}'")
    means = np.array([s.channel(vi).mean() for s in samples])
    stds = np.array([s.channel(vi).std() for s in samples])
    mask = means > threshold
    if mask.sum() < 2:
        raise ValueError(f"fewer than 2 plots have mean {vi} > {threshold}")

    def cv_percent(values):
        return float(values.std() / values.mean() * 100.0)

    return {
        "fraction_above": float(mask.mean()),
        "cv_of_means": cv_percent(means[mask]),
        "cv_of_stds": cv_percent(stds[mask]),
    }


# -- on-disk plot directories -----------------------------------------------------

def _write_f32(path: Path, arr: np.ndarray):
    path.write_bytes(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_f32(path: Path, shape) -> np.ndarray:
    arr = np.frombuffer(path.read_bytes(), dtype="<f4").astype(np.float64)
    return arr.reshape(shape)


def _write_meta(plot_dir: Path, plot_id, h, w, date, stage):
    meta = {"plot_id": plot_id, "width": int(w), "height": int(h),
            "date": date, "stage": stage}
    (plot_dir / "meta.json").write_text(json.dumps(meta, sort_keys=True))


def save_band_dir(root, bands: BandStack) -> Path:
    plot_dir = Path(root) / bands.plot_id
    plot_dir.mkdir(parents=True, exist_ok=True)
    h, w = bands.shape
    for name in BAND_NAMES:
        _write_f32(plot_dir / f"{name}.f32", bands.bands[name])
    _write_meta(plot_dir, bands.plot_id, h, w, bands.acquisition_date, bands.stage)
    return plot_dir


def load_band_dir(plot_dir) -> BandStack:
    plot_dir = Path(plot_dir)
    meta = json.loads((plot_dir / "meta.json").read_text())
    shape = (meta["height"], meta["width"])
    bands = {name: _read_f32(plot_dir / f"{name}.f32", shape) for name in BAND_NAMES}
    return BandStack(bands, plot_id=meta["plot_id"],
                     acquisition_date=meta.get("date", ""), stage=meta.get("stage", ""))


def save_vi_dir(root, stack: VIStack, date: str = "") -> Path:
    plot_dir = Path(root) / stack.plot_id
    plot_dir.mkdir(parents=True, exist_ok=True)
    _, h, w = stack.channels.shape
    for i, name in enumerate(VI_NAMES):
        _write_f32(plot_dir / f"{name}.f32", stack.channels[i])
    _write_meta(plot_dir, stack.plot_id, h, w, date, stack.stage)
    return plot_dir


def load_vi_dir(plot_dir) -> VIStack:
    plot_dir = Path(plot_dir)
    meta = json.loads((plot_dir / "meta.json").read_text())
    shape = (meta["height"], meta["width"])
    channels = np.stack([_read_f32(plot_dir / f"{name}.f32", shape) for name in VI_NAMES])
    return VIStack(channels, plot_id=meta["plot_id"], stage=meta.get("stage", ""))


def list_plot_dirs(root) -> list[Path]:
    root = Path(root)
    return sorted(p for p in root.iterdir() if (p / "meta.json").exists())
