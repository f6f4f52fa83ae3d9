"""Sparse observation ingestion and dense hourly encoding.

Raw input is a stream of (feature, time, value, stay) observations. A fitted
catalog fixes the feature order and z-score parameters; densification turns a
stay into a T x F value matrix plus a binary observation mask, where imputed
cells hold zero (the standardized feature mean).
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

#: hour bins are half-open [h, h+1); ties on identical timestamps keep input order
HOUR = 1.0


@dataclass(frozen=True)
class QuadrupletRecord:
    feature_id: str
    time: float
    value: float
    stay_id: str


@dataclass
class FeatureCatalog:
    """Ordered feature list with per-feature standardization parameters.

    Means and stds use the population convention (denominator N) so a single
    streaming pass is exact. Features observed fewer than twice or with zero
    variance are excluded and listed in ``excluded``.
    """

    features: list
    means: np.ndarray
    stds: np.ndarray
    excluded: list = field(default_factory=list)

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float)
        self.stds = np.asarray(self.stds, dtype=float)
        if np.any(self.stds <= 0):
            raise DataError("catalog stds must be positive")
        self._index = {f: i for i, f in enumerate(self.features)}

    def __len__(self):
        return len(self.features)

    def index_of(self, feature_id):
        return self._index.get(feature_id)

    def standardize(self, feature_idx: int, value: float) -> float:
        return (value - self.means[feature_idx]) / self.stds[feature_idx]

    def destandardize(self, feature_idx: int, z: float) -> float:
        return z * self.stds[feature_idx] + self.means[feature_idx]

    def to_jsonable(self) -> dict:
        return {
            "features": [
                {"id": f, "mean": float(m), "std": float(s)}
                for f, m, s in zip(self.features, self.means, self.stds)
            ],
            "excluded": [{"id": f, "reason": r} for f, r in self.excluded],
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "FeatureCatalog":
        feats = obj["features"]
        return cls(
            features=[f["id"] for f in feats],
            means=np.array([f["mean"] for f in feats], dtype=float),
            stds=np.array([f["std"] for f in feats], dtype=float),
            excluded=[(e["id"], e["reason"]) for e in obj.get("excluded", [])],
        )


@dataclass
class DenseSeries:
    """One stay as a dense hourly matrix of standardized values plus mask."""

    stay_id: str
    values: np.ndarray  # T x F, float, zero where mask == 0
    mask: np.ndarray    # T x F, {0, 1}
    features: list

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.mask = np.asarray(self.mask, dtype=np.int8)
        if self.values.shape != self.mask.shape:
            raise DataError(
                f"stay {self.stay_id}: values {self.values.shape} vs mask {self.mask.shape}"
            )
        if self.values.ndim != 2 or self.values.shape[1] != len(self.features):
            raise DataError(f"stay {self.stay_id}: shape does not match feature list")
        if not np.isin(self.mask, (0, 1)).all():
            raise DataError(f"stay {self.stay_id}: mask must be binary")
        if np.any(self.values[self.mask == 0] != 0.0):
            raise DataError(f"stay {self.stay_id}: imputed cells must be zero")

    @property
    def horizon(self) -> int:
        return self.values.shape[0]

    def to_jsonable(self) -> dict:
        return {
            "stay_id": self.stay_id,
            "T": int(self.horizon),
            "features": list(self.features),
            "values": [[float(v) for v in row] for row in self.values],
            "mask": [[int(v) for v in row] for row in self.mask],
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "DenseSeries":
        return cls(
            stay_id=str(obj["stay_id"]),
            values=np.array(obj["values"], dtype=float),
            mask=np.array(obj["mask"], dtype=np.int8),
            features=list(obj["features"]),
        )


@dataclass
class SparsityReport:
    per_feature: dict
    overall: float


@dataclass
class DensifyStats:
    stays_kept: int = 0
    stays_dropped: int = 0
    unknown_feature_records: int = 0
    records_used: int = 0
    records_beyond_horizon: int = 0


def fit_catalog(records) -> FeatureCatalog:
    """Fit feature order and z-score parameters from an observation stream."""
    order = []
    count, total, total_sq = {}, {}, {}
    for rec in records:
        f = rec.feature_id
        if f not in count:
            order.append(f)
            count[f] = 0
            total[f] = 0.0
            total_sq[f] = 0.0
        count[f] += 1
        total[f] += rec.value
        total_sq[f] += rec.value * rec.value
    if not order:
        raise DataError("no observations")

    features, means, stds, excluded = [], [], [], []
    for f in order:
        n = count[f]
        if n < 2:
            excluded.append((f, "fewer than 2 observations"))
            continue
        mean = total[f] / n
        var = max(total_sq[f] / n - mean * mean, 0.0)
        scale = max(1.0, mean * mean)
        if var <= 1e-12 * scale:
            excluded.append((f, "zero variance"))
            continue
        features.append(f)
        means.append(mean)
        stds.append(math.sqrt(var))
    if not features:
        raise DataError("no feature with positive variance")
    return FeatureCatalog(features, np.array(means), np.array(stds), excluded)


def densify(records, catalog: FeatureCatalog, horizon: int):
    """Encode observations into per-stay dense hourly matrices.

    Per stay / hour / feature the earliest observation inside [h, h+1) wins;
    cells without an observation get value 0 and mask 0. Stays with any hour
    in [0, horizon) empty across all features are dropped. Returns
    (list of DenseSeries, DensifyStats).
    """
    if horizon <= 0:
        raise DataError("horizon must be positive")
    stats = DensifyStats()
    n_feat = len(catalog)
    # (stay, hour, feature) -> (time, arrival index, value); earliest wins
    best = {}
    stay_order = []
    seen_stays = set()
    for idx, rec in enumerate(records):
        if rec.time < 0:
            raise DataError(f"negative time {rec.time} for stay {rec.stay_id}")
        if rec.stay_id not in seen_stays:
            seen_stays.add(rec.stay_id)
            stay_order.append(rec.stay_id)
        f = catalog.index_of(rec.feature_id)
        if f is None:
            stats.unknown_feature_records += 1
            continue
        h = int(rec.time // HOUR)
        if h >= horizon:
            stats.records_beyond_horizon += 1
            continue
        key = (rec.stay_id, h, f)
        prev = best.get(key)
        if prev is None or (rec.time, idx) < (prev[0], prev[1]):
            best[key] = (rec.time, idx, rec.value)
        stats.records_used += 1

    per_stay_hours = {}
    for (stay, h, _f) in best:
        per_stay_hours.setdefault(stay, set()).add(h)

    out = []
    for stay in stay_order:
        hours = per_stay_hours.get(stay, set())
        if len(hours) < horizon:  # some hour in [0, horizon) has no observation
            stats.stays_dropped += 1
            continue
        values = np.zeros((horizon, n_feat))
        mask = np.zeros((horizon, n_feat), dtype=np.int8)
        for f in range(n_feat):
            for h in range(horizon):
                hit = best.get((stay, h, f))
                if hit is not None:
                    values[h, f] = catalog.standardize(f, hit[2])
                    mask[h, f] = 1
        out.append(DenseSeries(stay, values, mask, list(catalog.features)))
        stats.stays_kept += 1
    return out, stats


def sparsity(series: list) -> SparsityReport:
    """Fraction of imputed cells, per feature and overall."""
    if not series:
        raise DataError("empty series list")
    masks = np.stack([s.mask for s in series])
    observed_f = masks.sum(axis=(0, 1)).astype(float)
    cells_f = masks.shape[0] * masks.shape[1]
    per_feature = {
        f: float(1.0 - observed_f[i] / cells_f)
        for i, f in enumerate(series[0].features)
    }
    overall = float(1.0 - masks.sum() / masks.size)
    return SparsityReport(per_feature, overall)


def truncate_to_blocks(series: DenseSeries, block_len: int) -> DenseSeries:
    """Drop trailing hours so the horizon divides evenly into blocks."""
    if block_len <= 0:
        raise DataError("block length must be positive")
    t = (series.horizon // block_len) * block_len
    if t == 0:
        raise DataError(f"stay {series.stay_id}: horizon {series.horizon} < block length")
    if t == series.horizon:
        return series
    return DenseSeries(series.stay_id, series.values[:t], series.mask[:t], series.features)


def read_quadruplet_csv(path):
    """Yield QuadrupletRecord from a CSV with header stay_id,feature_id,time_hours,value."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"stay_id", "feature_id", "time_hours", "value"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DataError(f"{path}: expected header stay_id,feature_id,time_hours,value")
        for i, row in enumerate(reader):
            try:
                yield QuadrupletRecord(
                    feature_id=row["feature_id"],
                    time=float(row["time_hours"]),
                    value=float(row["value"]),
                    stay_id=row["stay_id"],
                )
            except (ValueError, TypeError) as exc:
                raise DataError(f"{path}: bad row {i + 2}: {exc}") from exc


def write_series_ndjson(series, path):
    with open(path, "w", encoding="utf-8") as fh:
        for s in series:
            obj = s.to_jsonable() if isinstance(s, DenseSeries) else s
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_series_ndjson(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(DenseSeries.from_jsonable(json.loads(line)))
    if not out:
        raise DataError(f"{path}: no series")
    return out
