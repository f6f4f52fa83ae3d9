"""Ground-truth compositional generator for desk-scale validation.

Latent physiological states follow a Markov chain; every state emits one
block of hours (state mean pattern plus Gaussian noise) and the blocks are
concatenated, so composing states and then emitting equals emitting per state
and concatenating. Observation masks are Bernoulli per cell with per-state,
per-feature probabilities; unobserved cells are zeroed. Every split generated
from one model shares the emission rule, so the conditional distribution of
futures given pasts is identical across splits by construction.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .data import DenseSeries
from .errors import DataError
from .seeding import spawn_rng
from .symbolize import SymbolSequence


@dataclass
class LatentStateModel:
    states: list                 # state names, index = latent id
    features: list
    transition: np.ndarray       # |Z| x |Z|, row-stochastic
    initial: np.ndarray          # |Z|
    patterns: np.ndarray         # |Z| x delta x |F| mean block per state
    noise_scale: float
    obs_prob: np.ndarray         # |Z| x |F| per-state observation probability
    delta: int
    label_rule: str = "shared-emission"

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=float)
        self.initial = np.asarray(self.initial, dtype=float)
        self.patterns = np.asarray(self.patterns, dtype=float)
        self.obs_prob = np.asarray(self.obs_prob, dtype=float)
        z = len(self.states)
        if self.transition.shape != (z, z):
            raise DataError("transition matrix shape must be |Z| x |Z|")
        if not np.allclose(self.transition.sum(axis=1), 1.0, atol=1e-9) \
                or np.any(self.transition < 0):
            raise DataError("transition rows must be stochastic")
        if not np.isclose(self.initial.sum(), 1.0, atol=1e-9) or np.any(self.initial < 0):
            raise DataError("initial distribution must be stochastic")
        if self.noise_scale < 0:
            raise DataError("noise scale must be non-negative")
        if np.any(self.obs_prob < 0) or np.any(self.obs_prob > 1):
            raise DataError("observation probabilities must lie in [0, 1]")
        if self.patterns.shape != (z, self.delta, len(self.features)):
            raise DataError("patterns shape must be |Z| x delta x |F|")

    def to_jsonable(self) -> dict:
        return {
            "states": list(self.states),
            "features": list(self.features),
            "transition": self.transition.tolist(),
            "initial": self.initial.tolist(),
            "patterns": self.patterns.tolist(),
            "noise_scale": float(self.noise_scale),
            "obs_prob": self.obs_prob.tolist(),
            "delta": int(self.delta),
            "label_rule": self.label_rule,
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "LatentStateModel":
        return cls(
            states=obj["states"], features=obj["features"],
            transition=np.array(obj["transition"]), initial=np.array(obj["initial"]),
            patterns=np.array(obj["patterns"]), noise_scale=obj["noise_scale"],
            obs_prob=np.array(obj["obs_prob"]), delta=int(obj["delta"]),
            label_rule=obj.get("label_rule", "shared-emission"),
        )

    def model_hash(self) -> str:
        blob = json.dumps(self.to_jsonable(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class GeneratedCorpus:
    series: list
    latent_paths: dict  # stay_id -> list of latent state ids
    seed: int
    model_hash: str


def fig1_model(noise_scale=0.3, obs_prob=0.9, delta=3) -> LatentStateModel:
    """Four progressive states over six vital-sign-like features.

    A mostly-healthy start can develop an infection, which can progress to
    lung failure and on to cardiac failure; failure states are sticky. State
    mean patterns carry within-block ramps so blocks have temporal texture.
    """
    states = ["healthy", "infection", "lung_failure", "cardiac_failure"]
    features = ["hr", "sbp", "dbp", "mbp", "rr", "spo2"]
    transition = np.array([
        [0.88, 0.12, 0.00, 0.00],
        [0.10, 0.60, 0.25, 0.05],
        [0.00, 0.08, 0.62, 0.30],
        [0.00, 0.00, 0.15, 0.85],
    ])
    initial = np.array([0.85, 0.15, 0.0, 0.0])
    base = {
        "healthy":         [0.0,  0.0,  0.0,  0.0,  0.0,  0.0],
        "infection":       [1.2,  0.0,  0.0,  0.0,  1.4, -0.3],
        "lung_failure":    [0.8, -0.3,  0.0, -0.2,  2.0, -2.0],
        "cardiac_failure": [1.6, -2.0, -1.6, -1.9,  0.8, -0.9],
    }
    slope = {
        "healthy":         [0.0] * 6,
        "infection":       [0.15, 0.0, 0.0, 0.0, 0.1, -0.05],
        "lung_failure":    [0.1, -0.05, 0.0, 0.0, 0.15, -0.15],
        "cardiac_failure": [0.1, -0.15, -0.1, -0.12, 0.0, -0.05],
    }
    patterns = np.zeros((len(states), delta, len(features)))
    for z, name in enumerate(states):
        for t in range(delta):
            patterns[z, t] = np.array(base[name]) + t * np.array(slope[name])
    obs = np.full((len(states), len(features)), float(obs_prob))
    return LatentStateModel(states, features, transition, initial, patterns,
                            float(noise_scale), obs, delta)


def sample_latent_path(model: LatentStateModel, n_blocks: int, rng) -> list:
    path = [int(rng.choice(len(model.states), p=model.initial))]
    for _ in range(n_blocks - 1):
        path.append(int(rng.choice(len(model.states), p=model.transition[path[-1]])))
    return path


def emit_block(model: LatentStateModel, state: int, rng=None):
    """One block for a state: mean pattern + noise, Bernoulli mask, zeroed cells."""
    pattern = model.patterns[state]
    if rng is None:  # noise-free deterministic emission
        values = pattern.copy()
        mask = np.ones_like(pattern, dtype=np.int8)
        return values, mask
    values = pattern + model.noise_scale * rng.standard_normal(pattern.shape)
    mask = (rng.random(pattern.shape) < model.obs_prob[state]).astype(np.int8)
    values = values * mask
    return values, mask


def sample_corpus(model: LatentStateModel, n_stays: int, horizon: int, seed: int,
                  stay_prefix: str = "gen") -> GeneratedCorpus:
    """Sample latent Markov paths and emit per-state blocks, one rng per stay."""
    if horizon % model.delta != 0:
        raise DataError(f"horizon {horizon} not divisible by delta {model.delta}")
    n_blocks = horizon // model.delta
    series, paths = [], {}
    for i in range(n_stays):
        rng = spawn_rng(seed, "stay", i)
        path = sample_latent_path(model, n_blocks, rng)
        vals, masks = zip(*(emit_block(model, z, rng) for z in path))
        stay_id = f"{stay_prefix}-{i:06d}"
        series.append(DenseSeries(stay_id, np.concatenate(vals, axis=0),
                                  np.concatenate(masks, axis=0), list(model.features)))
        paths[stay_id] = path
    return GeneratedCorpus(series, paths, seed, model.model_hash())


def oracle_symbolize(corpus: GeneratedCorpus, delta: int) -> list:
    """Symbol sequences whose ids are the true latent states."""
    out = []
    for s in corpus.series:
        path = corpus.latent_paths[s.stay_id]
        out.append(SymbolSequence(
            s.stay_id, list(path), delta,
            [(s.stay_id, i) for i in range(len(path))],
        ))
    return out


def write_latent_ndjson(corpus: GeneratedCorpus, path):
    with open(path, "w", encoding="utf-8") as fh:
        for s in corpus.series:
            obj = {"stay_id": s.stay_id, "latent": corpus.latent_paths[s.stay_id]}
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")
