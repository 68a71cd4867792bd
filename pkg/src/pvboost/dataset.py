"""Inverter telemetry: CSV ingestion, cleaning, splitting, and synthesis.

All records carry 12 features at 15-minute resolution plus active/reactive
power labels. The canonical feature order is fixed by FEATURE_NAMES and the
CSV column layout by CSV_COLUMNS.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from .errors import (
    DuplicateTimestampError,
    EmptyDatasetError,
    RowParseError,
    SchemaError,
)

FEATURE_NAMES: tuple[str, ...] = (
    "va_rms",
    "vb_rms",
    "vc_rms",
    "ia_rms",
    "ib_rms",
    "ic_rms",
    "irradiance",
    "ambient_temp",
    "module_temp",
    "humidity",
    "wind_speed",
    "hour_frac",
)

CSV_COLUMNS: tuple[str, ...] = ("timestamp", *FEATURE_NAMES, "p_kw", "q_kvar")

N_FEATURES = len(FEATURE_NAMES)

# Physical plausibility bounds for a 220 V system; rows outside are dropped.
VOLTAGE_RANGE = (0.0, 400.0)
IRRADIANCE_RANGE = (0.0, 1500.0)

# Synthetic daylight window (local clock, fixed).
SUNRISE_HOUR = 6.0
SUNSET_HOUR = 19.0


@dataclass(frozen=True)
class SampleRecord:
    """One 15-minute telemetry sample with both power labels."""

    timestamp: datetime
    features: tuple[float, ...]
    active_power: float
    reactive_power: float

    def __post_init__(self):
        if len(self.features) != N_FEATURES:
            raise ValueError(
                f"expected {N_FEATURES} features, got {len(self.features)}"
            )


@dataclass(frozen=True)
class InverterDataset:
    """Telemetry for one inverter, records ordered by timestamp."""

    inverter_id: int
    capacity: float
    feature_names: tuple[str, ...]
    records: tuple[SampleRecord, ...]

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")
        if len(self.feature_names) != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} feature names")

    def feature_matrix(self) -> np.ndarray:
        return np.array([r.features for r in self.records], dtype=np.float64)

    def labels(self, target: str) -> np.ndarray:
        if target == "active":
            return np.array([r.active_power for r in self.records])
        if target == "reactive":
            return np.array([r.reactive_power for r in self.records])
        raise ValueError(f"unknown target {target!r}")


@dataclass(frozen=True)
class SplitDataset:
    """Seeded random train/test partition of one dataset's records."""

    train: tuple[SampleRecord, ...]
    test: tuple[SampleRecord, ...]
    seed: int
    train_fraction: float


def _parse_cell(text: str, line: int, column: str) -> float:
    """Parse a numeric cell; empty means missing (NaN)."""
    text = text.strip()
    if text == "":
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise RowParseError(line, f"cannot parse {column}={text!r}") from None
    if math.isinf(value):
        raise RowParseError(line, f"non-finite value in {column}")
    return value


def load_csv(path, capacity: float, inverter_id: int = 1) -> InverterDataset:
    """Load the canonical 15-column CSV into a dataset sorted by timestamp.

    Rows may still contain missing (empty) feature or label cells; cleaning
    is a separate step. Raises SchemaError on a bad header (naming the first
    mismatched column), RowParseError with the line number on a bad cell,
    and DuplicateTimestampError on repeated timestamps.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("file is empty, header row required") from None
        for i, expected in enumerate(CSV_COLUMNS):
            got = header[i].strip() if i < len(header) else "<missing>"
            if got != expected:
                raise SchemaError(
                    f"header column {i + 1} is {got!r}, expected {expected!r}"
                )
        if len(header) > len(CSV_COLUMNS):
            raise SchemaError(
                f"header has {len(header)} columns, expected {len(CSV_COLUMNS)}"
            )

        records = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_COLUMNS):
                raise RowParseError(
                    line_no, f"expected {len(CSV_COLUMNS)} cells, got {len(row)}"
                )
            try:
                ts = datetime.fromisoformat(row[0].strip())
            except ValueError:
                raise RowParseError(
                    line_no, f"bad timestamp {row[0]!r}"
                ) from None
            feats = tuple(
                _parse_cell(row[1 + j], line_no, FEATURE_NAMES[j])
                for j in range(N_FEATURES)
            )
            p = _parse_cell(row[1 + N_FEATURES], line_no, "p_kw")
            q = _parse_cell(row[2 + N_FEATURES], line_no, "q_kvar")
            records.append(SampleRecord(ts, feats, p, q))

    records.sort(key=lambda r: r.timestamp)
    for a, b in zip(records, records[1:]):
        if a.timestamp == b.timestamp:
            raise DuplicateTimestampError(f"duplicate timestamp {a.timestamp}")
    return InverterDataset(inverter_id, capacity, FEATURE_NAMES, tuple(records))


def save_csv(dataset: InverterDataset, path) -> int:
    """Write the canonical CSV; returns the number of data rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in dataset.records:
            writer.writerow(
                [r.timestamp.isoformat()]
                + [repr(v) for v in r.features]
                + [repr(r.active_power), repr(r.reactive_power)]
            )
    return len(dataset.records)


def _row_in_bounds(feats: tuple[float, ...], p: float, q: float, cap: float) -> bool:
    va, vb, vc, ia, ib, ic, irr = feats[:7]
    for v in (va, vb, vc):
        if not VOLTAGE_RANGE[0] <= v <= VOLTAGE_RANGE[1]:
            return False
    if ia < 0 or ib < 0 or ic < 0:
        return False
    if not IRRADIANCE_RANGE[0] <= irr <= IRRADIANCE_RANGE[1]:
        return False
    if abs(p) > cap or abs(q) > cap:
        return False
    return True


def clean(dataset: InverterDataset) -> InverterDataset:
    """Forward-fill missing features, drop unfillable and dirty rows.

    Missing feature cells take the previous record's value. Leading rows
    with no fill source are dropped, as are rows with missing labels or
    values outside the physical bounds. Idempotent. Raises
    EmptyDatasetError if nothing survives.
    """
    kept = []
    carry: list[float] | None = None
    for r in dataset.records:
        feats = list(r.features)
        missing = [j for j, v in enumerate(feats) if math.isnan(v)]
        if missing:
            if carry is None:
                continue  # unfillable leading gap
            for j in missing:
                feats[j] = carry[j]
        carry = feats
        if math.isnan(r.active_power) or math.isnan(r.reactive_power):
            continue
        if not _row_in_bounds(tuple(feats), r.active_power, r.reactive_power,
                              dataset.capacity):
            continue
        kept.append(
            SampleRecord(r.timestamp, tuple(feats), r.active_power, r.reactive_power)
        )
    if not kept:
        raise EmptyDatasetError("all rows dropped during cleaning")
    return InverterDataset(
        dataset.inverter_id, dataset.capacity, dataset.feature_names, tuple(kept)
    )


def split(dataset: InverterDataset, train_fraction: float, seed: int) -> SplitDataset:
    """Seeded random partition; first floor(f*n) permuted records train."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    n = len(dataset.records)
    if n == 0:
        raise EmptyDatasetError("cannot split an empty dataset")
    indices = list(range(n))
    random.Random(seed).shuffle(indices)  # Fisher-Yates
    n_train = math.floor(train_fraction * n)
    train = tuple(dataset.records[i] for i in indices[:n_train])
    test = tuple(dataset.records[i] for i in indices[n_train:])
    return SplitDataset(train, test, seed, train_fraction)


def _smooth_noise(rng: np.random.Generator, n: int, width: int) -> np.ndarray:
    """Zero-mean unit-variance noise low-passed with a Gaussian kernel."""
    raw = rng.standard_normal(n + 8 * width)
    k = np.exp(-0.5 * (np.arange(-4 * width, 4 * width + 1) / width) ** 2)
    k /= k.sum()
    out = np.convolve(raw, k, mode="same")[4 * width : 4 * width + n]
    std = out.std()
    return out / std if std > 0 else out


def synth_generate(n_days: int, capacity: float, seed: int,
                   inverter_id: int = 1) -> InverterDataset:
    """Generate a synthetic but physically consistent inverter dataset.

    Active power follows a clear-sky half-sine envelope between 06:00 and
    19:00, saturating in irradiance and derated by module temperature, so
    the mapping from features to labels is nonlinear yet nearly noise-free.
    Reactive power follows a volt-var style curve of the realized voltage
    and power. Outside daylight the active power is exactly zero.
    """
    if n_days < 1:
        raise ValueError("n_days must be >= 1")
    if capacity <= 0:
        raise ValueError("capacity must be positive")
    rng = np.random.default_rng(seed)
    n = n_days * 96
    start = datetime(2024, 5, 1, tzinfo=timezone.utc)
    hours = (np.arange(n) % 96) * 0.25

    day_len = SUNSET_HOUR - SUNRISE_HOUR
    env = np.sin(np.pi * (hours - SUNRISE_HOUR) / day_len)
    daylight = (hours > SUNRISE_HOUR) & (hours < SUNSET_HOUR)
    env = np.where(daylight, np.clip(env, 0.0, 1.0), 0.0)

    cloud = np.clip(0.75 + 0.35 * _smooth_noise(rng, n, 10), 0.25, 1.0)
    irr = np.clip(1000.0 * env * cloud + 3.0 * rng.standard_normal(n), *IRRADIANCE_RANGE)
    irr = np.where(daylight, irr, 0.0)

    ambient = 21.0 + 6.0 * np.sin(np.pi * (hours - 8.0) / 16.0) \
        + 0.4 * _smooth_noise(rng, n, 16)
    module = ambient + 0.025 * irr + 0.3 * rng.standard_normal(n)
    derate = np.clip(1.0 - 0.004 * (module - 25.0), 0.7, 1.05)

    # Saturating irradiance response makes the P mapping nonlinear, so a
    # linear fit on irradiance underperforms a tree ensemble.
    p_norm = np.tanh(3.0 * irr / 1000.0) / math.tanh(3.0) * derate
    p = 0.93 * capacity * p_norm + 0.002 * capacity * rng.standard_normal(n)
    p = np.where(daylight, np.clip(p, 0.0, capacity), 0.0)

    # Meter noise on voltages/currents keeps them from leaking the label
    # linearly (and spreads split thresholds well apart).
    va = 227.0 + 9.0 * p_norm + 1.2 * rng.standard_normal(n)
    vb = 228.0 + 8.5 * p_norm + 1.2 * rng.standard_normal(n)
    vc = 226.5 + 9.5 * p_norm + 1.2 * rng.standard_normal(n)
    vmean = (va + vb + vc) / 3.0

    phase_w = p * 1000.0 / 3.0
    ia = np.clip(phase_w / va + 0.4 * rng.standard_normal(n), 0.0, None)
    ib = np.clip(phase_w / vb + 0.4 * rng.standard_normal(n), 0.0, None)
    ic = np.clip(phase_w / vc + 0.4 * rng.standard_normal(n), 0.0, None)

    humidity = np.clip(55.0 - 25.0 * env * cloud + 5.0 * _smooth_noise(rng, n, 12),
                       5.0, 100.0)
    wind = np.clip(2.5 + 1.5 * _smooth_noise(rng, n, 8), 0.0, None)
    hour_frac = hours / 24.0

    # Volt-var style absorption on top of a constant overnight var
    # baseline; a function of the realized (noisy) voltage and power
    # features, so it stays learnable from them.
    vdev = (vmean - 230.0) / 10.0
    sig = (0.5 + 0.5 * np.tanh(1.8 * vdev)) \
        * (0.35 + 0.65 * (p / capacity) ** 1.3)
    qfrac = 0.11 + 0.11 * sig
    q = -capacity * qfrac + 0.0012 * capacity * rng.standard_normal(n)
    q = np.clip(q, -0.25 * capacity, -0.10 * capacity)

    records = []
    cols = (va, vb, vc, ia, ib, ic, irr, ambient, module, humidity, wind, hour_frac)
    # Telemetry is logged at float32 precision; snapping features to the
    # float32 grid keeps threshold comparisons identical across the
    # full-precision and lowered inference paths.
    cols = tuple(np.float64(np.float32(c)) for c in cols)
    for i in range(n):
        records.append(
            SampleRecord(
                start + timedelta(minutes=15 * i),
                tuple(float(c[i]) for c in cols),
                float(p[i]),
                float(q[i]),
            )
        )
    return InverterDataset(inverter_id, capacity, FEATURE_NAMES, tuple(records))
