"""Randomized splice baseline: the non-compositional control.

A contiguous time window of one series (values and mask together) is replaced
by the same window of another series. Cuts run along the time axis only, on
hour boundaries, so the control differs from compositional synthesis exactly
in ignoring any notion of matching context.
"""

import json
from dataclasses import dataclass

import numpy as np

from .data import DenseSeries
from .errors import DataError
from .seeding import spawn_rng


@dataclass
class CutMixConfig:
    window_len: int | None  # hours; None draws a fresh block-aligned length per output
    seed: int = 0
    budget: int = 0
    block_len: int = 3  # alignment unit for randomly drawn window lengths


def cutmix(a: DenseSeries, b: DenseSeries, cfg: CutMixConfig, rng=None) -> dict:
    """Splice a random window of ``b`` into ``a``.

    Returns ``{"series": DenseSeries, "lineage": {...}}`` where lineage records
    the donor pair and cut position.
    """
    if a.values.shape != b.values.shape or a.features != b.features:
        raise DataError(f"shape mismatch between stays {a.stay_id} and {b.stay_id}")
    t = a.horizon
    if rng is None:
        rng = spawn_rng(cfg.seed, "cutmix")
    if cfg.window_len is None:
        n_blocks = t // cfg.block_len
        window = cfg.block_len * int(rng.integers(1, max(2, n_blocks)))
    else:
        window = int(cfg.window_len)
    if not 0 < window < t:
        raise DataError(f"window length {window} outside (0, {t})")
    u = int(rng.integers(0, t - window + 1))
    values = a.values.copy()
    mask = a.mask.copy()
    values[u:u + window] = b.values[u:u + window]
    mask[u:u + window] = b.mask[u:u + window]
    series = DenseSeries(f"cutmix-{a.stay_id}-{b.stay_id}", values, mask, list(a.features))
    lineage = {"method": "cutmix", "a": a.stay_id, "b": b.stay_id,
               "u": u, "window": window}
    return {"series": series, "lineage": lineage}


def cutmix_dataset(data: list, cfg: CutMixConfig):
    """Yield ``cfg.budget`` splices over random distinct pairs, seeded."""
    if len(data) < 2:
        raise DataError("cutmix needs at least 2 series")
    rng = spawn_rng(cfg.seed, "cutmix-dataset")
    for i in range(cfg.budget):
        ia = int(rng.integers(len(data)))
        ib = int(rng.integers(len(data) - 1))
        if ib >= ia:
            ib += 1
        out = cutmix(data[ia], data[ib], cfg, rng=rng)
        out["series"].stay_id = f"cutmix-{i:06d}"
        yield out


def write_cutmix_ndjson(items, path):
    with open(path, "w", encoding="utf-8") as fh:
        for it in items:
            obj = it["series"].to_jsonable()
            obj["lineage"] = it["lineage"]
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")
