"""Radar intensity stack preprocessing: multitemporal speckle filter, dB, 8-bit stretch.

Stacks are co-registered and calibrated before they get here.  Arrays are
indexed ``(date, channel, row, col)``.  Missing observations are NaN.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

NODATA_LABEL = 0


@dataclass
class RasterStack:
    intensities: np.ndarray
    dates: list[str]
    channels: tuple[str, ...] = ("VV", "VH")

    def __post_init__(self):
        self.intensities = np.asarray(self.intensities, dtype=np.float64)
        if self.intensities.ndim != 4:
            raise ValueError(f"stack must be (date, channel, row, col), got {self.intensities.shape}")
        m, c = self.intensities.shape[:2]
        if len(self.dates) != m:
            raise ValueError(f"{len(self.dates)} dates for {m} images")
        if len(self.channels) != c:
            raise ValueError(f"{len(self.channels)} channel names for {c} channels")
        if list(self.dates) != sorted(self.dates):
            raise ValueError("dates must be in ascending order")
        if (self.intensities < 0).any():
            raise ValueError("intensities must be non-negative")

    @property
    def shape(self):
        return self.intensities.shape

    @property
    def height(self) -> int:
        return self.shape[2]

    @property
    def width(self) -> int:
        return self.shape[3]


@dataclass
class QuantizedStack:
    values: np.ndarray  # uint8, (date, channel, row, col)
    valid: np.ndarray  # bool, same shape
    dates: list[str]
    channels: tuple[str, ...]
    bounds: list[tuple[float, float]] = field(default_factory=list)  # per-channel (low, high) in dB


@dataclass
class FilterReport:
    window: int
    passthrough: np.ndarray  # bool (channel, row, col): zero local mean somewhere, left unfiltered

    @property
    def passthrough_count(self) -> int:
        return int(self.passthrough.sum())


def _window_sums(img: np.ndarray, half: int) -> np.ndarray:
    """Sum over a (2*half+1)^2 window clipped at the image edges, via an integral image."""
    h, w = img.shape
    ii = np.zeros((h + 1, w + 1))
    ii[1:, 1:] = img.cumsum(axis=0).cumsum(axis=1)
    r0 = np.clip(np.arange(h) - half, 0, h)
    r1 = np.clip(np.arange(h) + half + 1, 0, h)
    c0 = np.clip(np.arange(w) - half, 0, w)
    c1 = np.clip(np.arange(w) + half + 1, 0, w)
    return (ii[r1][:, c1] - ii[r0][:, c1]) - (ii[r1][:, c0] - ii[r0][:, c0])


def local_mean(img: np.ndarray, window: int) -> np.ndarray:
    """Mean over the clipped window, ignoring NaN pixels (NaN where none are valid)."""
    valid = ~np.isnan(img)
    sums = _window_sums(np.where(valid, img, 0.0), window // 2)
    counts = _window_sums(valid.astype(np.float64), window // 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1.0), np.nan)


def temporal_filter(stack: RasterStack, window: int = 7) -> tuple[RasterStack, FilterReport]:
    """Quegan-Yu multitemporal filter.

    For each channel, output image k is
    ``J_k = mean_k / M * sum_i I_i / mean_i`` where ``mean_i`` is the local
    window mean of image i.  Pixels where any local mean is zero pass through
    unchanged and are flagged in the report.  Missing observations (NaN) are
    left out of the sum and ``M`` counts only the dates observed at the pixel.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    m, nch, h, w = stack.shape
    if m < 2:
        raise ValueError("temporal filtering needs at least two dates")
    out = np.empty_like(stack.intensities)
    passthrough = np.zeros((nch, h, w), dtype=bool)
    for ch in range(nch):
        imgs = stack.intensities[:, ch]
        means = np.stack([local_mean(img, window) for img in imgs])
        zero = (means == 0).any(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            ratios = imgs / means
        observed = ~np.isnan(ratios)
        total = np.zeros((h, w))
        for i in range(m):
            total += np.where(observed[i], ratios[i], 0.0)
        n_obs = observed.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            filtered = means * total / n_obs
        filtered = np.where(np.isnan(imgs), np.nan, filtered)
        out[:, ch] = np.where(zero[None], imgs, filtered)
        passthrough[ch] = zero
    return RasterStack(out, list(stack.dates), stack.channels), FilterReport(window, passthrough)


def to_db(values, floor_db: float = -30.0) -> np.ndarray:
    """``10 log10(I)``, with values at or below ``10**(floor_db/10)`` mapped to ``floor_db``."""
    if not np.isfinite(floor_db):
        raise ValueError("floor_db must be finite")
    if isinstance(values, RasterStack):
        values = values.intensities
    values = np.asarray(values, dtype=np.float64)
    floor_lin = 10.0 ** (floor_db / 10.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        db = 10.0 * np.log10(values)
    db = np.where(values <= floor_lin, floor_db, db)
    return np.where(np.isnan(values), np.nan, db)


def affine_to_byte(values, low: float, high: float) -> np.ndarray:
    """Map ``[low, high]`` linearly onto ``[0, 255]``, clamp, round half up.  NaN stays NaN."""
    values = np.asarray(values, dtype=np.float64)
    if high <= low:
        return np.where(np.isnan(values), np.nan, 0.0)
    scaled = np.floor((values - low) / (high - low) * 255.0 + 0.5)
    return np.clip(scaled, 0.0, 255.0)


def quantize(db_stack, low_pct: float = 2.0, high_pct: float = 98.0,
             dates=None, channels=("VV", "VH")) -> QuantizedStack:
    """Per-channel percentile stretch to 8 bits, pooled over all dates and pixels."""
    if not 0.0 <= low_pct < high_pct <= 100.0:
        raise ValueError(f"need 0 <= low_pct < high_pct <= 100, got {low_pct}, {high_pct}")
    db = np.asarray(db_stack, dtype=np.float64)
    if db.ndim != 4:
        raise ValueError(f"expected (date, channel, row, col), got {db.shape}")
    valid = ~np.isnan(db)
    values = np.zeros(db.shape, dtype=np.uint8)
    bounds = []
    for ch in range(db.shape[1]):
        plane = db[:, ch]
        if not valid[:, ch].any():
            bounds.append((np.nan, np.nan))
            continue
        lo, hi = np.nanpercentile(plane, [low_pct, high_pct])
        if hi <= lo:
            warnings.warn(f"channel {ch}: degenerate percentile range ({lo} == {hi}); mapping to 0",
                          RuntimeWarning, stacklevel=2)
        q = affine_to_byte(plane, lo, hi)
        values[:, ch] = np.where(np.isnan(q), 0, q).astype(np.uint8)
        bounds.append((float(lo), float(hi)))
    if dates is None:
        dates = [f"t{k + 1:02d}" for k in range(db.shape[0])]
    return QuantizedStack(values, valid, list(dates), tuple(channels), bounds)


def extract_samples(q: QuantizedStack, labels):
    """One time series per labelled pixel, rows then columns.

    Returns ``(dataset, excluded)`` where ``excluded`` counts labelled pixels
    dropped because an observation was missing.
    """
    from .data import Dataset

    labels = np.asarray(labels)
    if labels.shape != q.values.shape[2:]:
        raise ValueError(f"label map {labels.shape} does not match stack geometry {q.values.shape[2:]}")
    rows, cols = np.nonzero(labels != NODATA_LABEL)
    complete = q.valid[:, :, rows, cols].all(axis=(0, 1))
    rows, cols = rows[complete], cols[complete]
    X = q.values[:, :, rows, cols].transpose(2, 0, 1).astype(np.float64)
    ids = [f"r{r}c{c}" for r, c in zip(rows, cols)]
    ds = Dataset(ids, X.reshape(len(ids), q.values.shape[0], q.values.shape[1]),
                 labels[rows, cols].astype(np.int64),
                 channels=tuple(ch.lower() for ch in q.channels))
    return ds, int((~complete).sum())


# -- files -------------------------------------------------------------------

_DTYPES = {"float32": "<f4", "float64": "<f8", "uint8": "u1"}


def write_stack(stack, json_path, dtype: str = "float32") -> None:
    """Write a JSON sidecar and a raw little-endian plane file next to it."""
    json_path = Path(json_path)
    if isinstance(stack, QuantizedStack):
        data, dates, channels, dtype = stack.values, stack.dates, stack.channels, "uint8"
    else:
        data, dates, channels = stack.intensities, stack.dates, stack.channels
    raw = json_path.with_suffix(".bin")
    meta = {"width": int(data.shape[3]), "height": int(data.shape[2]), "dates": list(dates),
            "channels": list(channels), "dtype": dtype, "data": raw.name}
    raw.write_bytes(np.ascontiguousarray(data, dtype=_DTYPES[dtype]).tobytes())
    json_path.write_text(json.dumps(meta, indent=2) + "\n")


def read_stack(json_path) -> RasterStack:
    json_path = Path(json_path)
    meta = json.loads(json_path.read_text())
    for key in ("width", "height", "dates", "channels", "dtype"):
        if key not in meta:
            raise ValueError(f"{json_path}: missing key {key!r}")
    if meta["dtype"] not in _DTYPES:
        raise ValueError(f"{json_path}: unsupported dtype {meta['dtype']!r}")
    raw = json_path.parent / meta.get("data", json_path.with_suffix(".bin").name)
    shape = (len(meta["dates"]), len(meta["channels"]), meta["height"], meta["width"])
    flat = np.fromfile(raw, dtype=_DTYPES[meta["dtype"]])
    if flat.size != int(np.prod(shape)):
        raise ValueError(f"{raw}: expected {int(np.prod(shape))} values, found {flat.size}")
    return RasterStack(flat.reshape(shape).astype(np.float64), meta["dates"], tuple(meta["channels"]))


def read_labels(path, height: int, width: int) -> np.ndarray:
    """Raw label map: one byte per pixel, row-major, 0 = nodata."""
    flat = np.fromfile(path, dtype=np.uint8)
    if flat.size != height * width:
        raise ValueError(f"{path}: expected {height * width} bytes, found {flat.size}")
    return flat.reshape(height, width)


def write_labels(labels, path) -> None:
    Path(path).write_bytes(np.ascontiguousarray(labels, dtype=np.uint8).tobytes())
