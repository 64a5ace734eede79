"""Time-series datasets: CSV ingestion and a synthetic class-profile generator.

A dataset holds ``N`` samples of ``T`` timesteps by ``C`` channels.  Feature
values are 8-bit radar intensities (0..255 stored as floats).  Labels are the
vegetation-quality class ids 1..5.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sarprep import affine_to_byte

CLASS_NAMES = {1: "Very low", 2: "Low", 3: "Average", 4: "High", 5: "Bare soil"}
SURVEY_CLASS_COUNTS = {1: 12589, 2: 15000, 3: 15000, 4: 15000, 5: 15000}

_FEATURE_RE = re.compile(r"^t(\d+)_([A-Za-z0-9]+)$")


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TimeSeriesSample:
    id: str
    features: np.ndarray  # (T, C)
    label: int


@dataclass
class Dataset:
    ids: list[str]
    X: np.ndarray  # (N, T, C), float64
    labels: np.ndarray  # (N,), class ids
    channels: tuple[str, ...] = ("vv", "vh")
    classes: tuple[int, ...] = tuple(CLASS_NAMES)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.ids = list(self.ids)
        if self.X.ndim != 3:
            if self.X.size == 0:
                self.X = self.X.reshape(0, 0, len(self.channels))
            else:
                raise DatasetFormatError(f"features must be (N, T, C), got {self.X.shape}")
        n = self.X.shape[0]
        if len(self.ids) != n or self.labels.shape != (n,):
            raise DatasetFormatError(f"{n} feature rows, {len(self.ids)} ids, {self.labels.shape[0]} labels")
        if self.X.shape[2] != len(self.channels):
            raise DatasetFormatError(f"{self.X.shape[2]} channels in data, {len(self.channels)} names")
        bad = ~np.isin(self.labels, self.classes)
        if bad.any():
            raise DatasetFormatError(f"label {self.labels[bad][0]} not in class set {self.classes}")

    def __len__(self) -> int:
        return len(self.ids)

    def __getitem__(self, k: int) -> TimeSeriesSample:
        return TimeSeriesSample(self.ids[k], self.X[k], int(self.labels[k]))

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    @property
    def timesteps(self) -> int:
        return self.X.shape[1]

    def class_index(self) -> np.ndarray:
        """Labels as 0-based positions in ``classes``."""
        return np.searchsorted(np.asarray(self.classes), self.labels)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset([self.ids[k] for k in idx], self.X[idx], self.labels[idx],
                       self.channels, self.classes)

    def with_labels(self, labels) -> "Dataset":
        return Dataset(self.ids, self.X, labels, self.channels, self.classes)

    def flat(self) -> np.ndarray:
        """``(N, T*C)`` features, timestep-major then channel."""
        return self.X.reshape(len(self), -1)


def feature_columns(timesteps: int, channels) -> list[str]:
    return [f"t{t + 1:02d}_{ch}" for t in range(timesteps) for ch in channels]


def _fmt(v: float) -> str:
    return np.format_float_positional(v, trim="-")


def dumps_csv(ds: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "label"] + feature_columns(ds.timesteps, ds.channels))
    for k in range(len(ds)):
        w.writerow([ds.ids[k], int(ds.labels[k])] + [_fmt(v) for v in ds.X[k].ravel()])
    return buf.getvalue()


def save_csv(ds: Dataset, path) -> None:
    Path(path).write_text(dumps_csv(ds))


def load_csv(path, classes=tuple(CLASS_NAMES)) -> Dataset:
    """Read ``id,label,t01_vv,t01_vh,...``; timesteps and channels come from the header."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file, expected a header") from None
        if header[:2] != ["id", "label"]:
            raise DatasetFormatError(f"{path}:1: header must start with id,label")
        timesteps, channels = _parse_header(path, header[2:])
        ids, labels, rows = [], [], []
        width = 2 + timesteps * len(channels)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DatasetFormatError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
            try:
                label = int(row[1])
                feats = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: {exc}") from None
            if label not in classes:
                raise DatasetFormatError(f"{path}:{lineno}: label {label} not in class set {tuple(classes)}")
            if not np.isfinite(feats).all():
                raise DatasetFormatError(f"{path}:{lineno}: non-finite feature value")
            ids.append(row[0])
            labels.append(label)
            rows.append(feats)
    X = np.asarray(rows, dtype=np.float64).reshape(len(rows), timesteps, len(channels))
    return Dataset(ids, X, np.asarray(labels, dtype=np.int64), tuple(channels), tuple(classes))


def _parse_header(path, cols):
    parsed = []
    for c in cols:
        m = _FEATURE_RE.match(c)
        if not m:
            raise DatasetFormatError(f"{path}:1: bad feature column {c!r}")
        parsed.append((int(m.group(1)), m.group(2)))
    if not parsed:
        raise DatasetFormatError(f"{path}:1: no feature columns")
    channels = []
    for t, ch in parsed:
        if t != parsed[0][0]:
            break
        channels.append(ch)
    timesteps = len(parsed) // len(channels)
    if feature_columns(timesteps, channels) != [f"t{t:02d}_{ch}" for t, ch in parsed] \
            or cols != feature_columns(timesteps, channels):
        raise DatasetFormatError(
            f"{path}:1: feature columns must be t01_{channels[0]}.. in timestep-major order")
    return timesteps, channels


def summarize(ds_or_labels, classes=tuple(CLASS_NAMES)) -> dict:
    """Per-class sample counts plus the total."""
    labels = ds_or_labels.labels if isinstance(ds_or_labels, Dataset) else np.asarray(ds_or_labels)
    counts = {c: int((labels == c).sum()) for c in classes}
    return {"counts": counts, "total": int(sum(counts.values()))}


def format_summary(summary: dict) -> str:
    lines = [f"{'ID':<4} {'Class':<10} {'Samples':>8}"]
    for c, n in summary["counts"].items():
        lines.append(f"({c})  {CLASS_NAMES.get(c, str(c)):<10} {n:>8}")
    lines.append(f"{'':<4} {'Total':<10} {summary['total']:>8}")
    return "\n".join(lines) + "\n"


# -- synthetic profiles ------------------------------------------------------

@dataclass
class ClassProfile:
    """Mean dB curve per channel, ``curves`` shaped ``(T, C)``, and its noise level."""

    class_id: int
    curves: np.ndarray
    noise_sigma: float

    def __post_init__(self):
        self.curves = np.asarray(self.curves, dtype=np.float64)
        if self.curves.ndim != 2:
            raise ValueError(f"class {self.class_id}: curves must be (T, C)")
        if self.noise_sigma < 0:
            raise ValueError(f"class {self.class_id}: noise_sigma must be >= 0")


@dataclass
class ProfileSet:
    """Class profiles plus the generator's within-class variability.

    ``shift_max`` is the half-width (in timesteps) of a per-sample uniform
    time shift applied to the class curve, a stand-in for field-to-field
    differences in crop phenology.  ``offset_sigma`` is a per-sample,
    per-channel backscatter level offset in dB.  ``db_range`` is the fixed dB
    interval mapped onto 0..255.
    """

    profiles: dict[int, ClassProfile]
    channels: tuple[str, ...] = ("vv", "vh")
    db_range: tuple[float, float] = (-28.0, -4.0)
    shift_max: float = 0.0
    offset_sigma: float = 0.0
    distinct_class: int | None = None
    crossing_class: int | None = None

    @property
    def timesteps(self) -> int:
        return next(iter(self.profiles.values())).curves.shape[0]

    def to_json(self) -> dict:
        return {
            "channels": list(self.channels),
            "db_range": list(self.db_range),
            "shift_max": self.shift_max,
            "offset_sigma": self.offset_sigma,
            "distinct_class": self.distinct_class,
            "crossing_class": self.crossing_class,
            "classes": {
                str(c): {"sigma": p.noise_sigma,
                         **{ch: [float(v) for v in p.curves[:, k]] for k, ch in enumerate(self.channels)}}
                for c, p in self.profiles.items()
            },
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ProfileSet":
        """Validate a profile document; errors name the offending JSON path."""

        def fail(where, msg):
            raise ValueError(f"$.{where}: {msg}")

        if not isinstance(doc, dict):
            fail("", "profile document must be an object")
        channels = tuple(doc.get("channels", ("vv", "vh")))
        classes = doc.get("classes")
        if not isinstance(classes, dict) or not classes:
            fail("classes", "must be a non-empty object")
        profiles = {}
        length = None
        for key, entry in classes.items():
            where = f"classes.{key}"
            try:
                cid = int(key)
            except ValueError:
                fail(where, "class keys must be integers")
            if not isinstance(entry, dict):
                fail(where, "must be an object")
            sigma = entry.get("sigma")
            if not isinstance(sigma, (int, float)) or sigma < 0:
                fail(f"{where}.sigma", "must be a non-negative number")
            curves = []
            for ch in channels:
                curve = entry.get(ch)
                if not isinstance(curve, list) or not all(isinstance(v, (int, float)) for v in curve):
                    fail(f"{where}.{ch}", "must be a list of numbers")
                if length is None:
                    length = len(curve)
                if len(curve) != length or length == 0:
                    fail(f"{where}.{ch}", f"expected {length} values, got {len(curve)}")
                curves.append(curve)
            profiles[cid] = ClassProfile(cid, np.array(curves).T, float(sigma))
        db_range = doc.get("db_range", (-28.0, -4.0))
        if (not isinstance(db_range, (list, tuple)) or len(db_range) != 2
                or not db_range[0] < db_range[1]):
            fail("db_range", "must be [low, high] with low < high")
        for key in ("shift_max", "offset_sigma"):
            v = doc.get(key, 0.0)
            if not isinstance(v, (int, float)) or v < 0:
                fail(key, "must be a non-negative number")
        for key in ("distinct_class", "crossing_class"):
            v = doc.get(key)
            if v is not None and v not in profiles:
                fail(key, f"class {v} has no profile")
        return cls(profiles, channels, (float(db_range[0]), float(db_range[1])),
                   float(doc.get("shift_max", 0.0)), float(doc.get("offset_sigma", 0.0)),
                   doc.get("distinct_class"), doc.get("crossing_class"))

    @classmethod
    def load(cls, path) -> "ProfileSet":
        return cls.from_json(json.loads(Path(path).read_text()))


def default_profiles() -> ProfileSet:
    """Synthetic stand-ins for five winter vegetation-quality classes.

    The curves are constructed, not measured.  They are built so that
    "High" sits apart from every other class in VH at every date, while "Low"
    crosses each other class's curve repeatedly and shares its pooled value
    range with them, so only the temporal shape identifies it.
    """
    t = np.arange(13, dtype=np.float64)

    def wave(level, amp, cycles, phase):
        return level + amp * np.sin(2 * np.pi * cycles * t / 13 + phase)

    shapes = {  # class: (cycles, phase)
        1: (1.0, 0.0),
        2: (2.0, 1.0),
        3: (1.5, 2.0),
        5: (0.5, 3.0),
    }
    profiles = {}
    for c, (cycles, phase) in shapes.items():
        vv = wave(-13.0, 2.5, cycles, phase)
        vh = wave(-20.0, 2.0, cycles, phase + 0.8)
        profiles[c] = ClassProfile(c, np.stack([vv, vh], axis=1), 1.5)
    high_vv = wave(-12.0, 2.0, 1.0, 2.0)
    high_vh = -13.0 + 0.1 * t
    profiles[4] = ClassProfile(4, np.stack([high_vv, high_vh], axis=1), 1.5)
    return ProfileSet(dict(sorted(profiles.items())), db_range=(-28.0, -4.0),
                      shift_max=4.5, offset_sigma=2.0, distinct_class=4, crossing_class=2)


def _shifted_curves(curves: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """Evaluate ``curves`` (T, C) at ``t + shift`` by linear interpolation, clamped at the ends."""
    T = curves.shape[0]
    pos = np.clip(np.arange(T)[None, :] + shifts[:, None], 0.0, T - 1)
    lo = np.minimum(np.floor(pos).astype(np.int64), T - 2) if T > 1 else np.zeros_like(pos, dtype=np.int64)
    frac = pos - lo
    if T == 1:
        return np.broadcast_to(curves[None], (len(shifts), 1, curves.shape[1])).copy()
    return curves[lo] * (1.0 - frac[..., None]) + curves[lo + 1] * frac[..., None]


def synth_generate(profiles: ProfileSet, counts: dict[int, int], seed: int = 0) -> Dataset:
    """Sample ``counts[c]`` noisy, 8-bit quantized series per class.

    Per sample: the class curve evaluated at a uniformly shifted time axis, plus
    a per-channel level offset, plus i.i.d. Gaussian noise in dB, then mapped to
    0..255 over ``profiles.db_range``.  Classes are generated in ascending id
    order from one seeded generator.
    """
    unknown = sorted(set(counts) - set(profiles.profiles))
    if unknown:
        raise ValueError(f"no profile for class(es) {unknown}")
    rng = np.random.default_rng(seed)
    lo, hi = profiles.db_range
    T, C = profiles.timesteps, len(profiles.channels)
    ids, labels, blocks = [], [], []
    for c in sorted(counts):
        n = int(counts[c])
        if n < 0:
            raise ValueError(f"negative count for class {c}")
        prof = profiles.profiles[c]
        shifts = rng.uniform(-profiles.shift_max, profiles.shift_max, n)
        offsets = rng.normal(0.0, profiles.offset_sigma, (n, 1, C))
        noise = rng.normal(0.0, prof.noise_sigma, (n, T, C))
        db = _shifted_curves(prof.curves, shifts) + offsets + noise
        blocks.append(affine_to_byte(db, lo, hi))
        ids += [f"c{c}_{k:05d}" for k in range(n)]
        labels += [c] * n
    X = np.concatenate(blocks) if blocks else np.zeros((0, T, C))
    return Dataset(ids, X, np.asarray(labels, dtype=np.int64), profiles.channels,
                   tuple(sorted(profiles.profiles)))


# -- profile property checks -------------------------------------------------

def pooled_overlap(a: np.ndarray, b: np.ndarray) -> float:
    """Overlap coefficient of two samples of byte values: ``sum_v min(p_a(v), p_b(v))``."""
    pa = np.bincount(np.asarray(a, dtype=np.int64).ravel(), minlength=256) / np.size(a)
    pb = np.bincount(np.asarray(b, dtype=np.int64).ravel(), minlength=256) / np.size(b)
    return float(np.minimum(pa, pb).sum())


def count_crossings(a: np.ndarray, b: np.ndarray) -> int:
    """Sign changes of ``a - b`` between consecutive timesteps (touching zero counts once)."""
    d = np.sign(np.asarray(a) - np.asarray(b))
    d = d[d != 0]
    return int((d[1:] != d[:-1]).sum())


@dataclass
class ProfileCheck:
    distinct_margin: dict[int, float] = field(default_factory=dict)
    crossings: dict[int, list[int]] = field(default_factory=dict)
    overlaps: dict[int, float] = field(default_factory=dict)
    separated: bool = False
    crosses_all: bool = False
    overlapping: bool = False

    @property
    def ok(self) -> bool:
        return self.separated and self.crosses_all and self.overlapping


def check_profiles(profiles: ProfileSet, samples_per_class: int = 2000, seed: int = 12345,
                   min_overlap: float = 0.6) -> ProfileCheck:
    """Verify the structural properties the benchmark relies on.

    * the distinct class is at least ``2 * sigma`` away from every other class
      at every timestep, in at least one channel;
    * the crossing class's curve crosses every other class's curve at two or
      more timesteps in some channel;
    * the crossing class's time-pooled value histogram overlaps by at least
      ``min_overlap`` with two or more other classes (per-channel mean of the
      overlap coefficient, estimated from a fresh sample).
    """
    rep = ProfileCheck()
    P = profiles.profiles
    d, x = profiles.distinct_class, profiles.crossing_class
    if d is not None:
        ok = True
        for c, p in P.items():
            if c == d:
                continue
            sigma = max(P[d].noise_sigma, p.noise_sigma)
            gap = np.abs(P[d].curves - p.curves).max(axis=1).min()
            rep.distinct_margin[c] = float(gap / sigma) if sigma > 0 else float("inf")
            ok &= gap >= 2 * sigma
        rep.separated = bool(ok)
    if x is not None:
        rep.crosses_all = True
        for c, p in P.items():
            if c == x:
                continue
            per_channel = [count_crossings(P[x].curves[:, k], p.curves[:, k])
                           for k in range(p.curves.shape[1])]
            rep.crossings[c] = per_channel
            rep.crosses_all &= max(per_channel) >= 2
        sample = synth_generate(profiles, {c: samples_per_class for c in P}, seed)
        xs = sample.X[sample.labels == x]
        for c in P:
            if c == x:
                continue
            other = sample.X[sample.labels == c]
            rep.overlaps[c] = float(np.mean([pooled_overlap(xs[..., k], other[..., k])
                                             for k in range(xs.shape[2])]))
        rep.overlapping = sum(v >= min_overlap for v in rep.overlaps.values()) >= 2
    return rep
