"""Empirical tests of distribution closeness plus supporting metrics.

The two headline tests view synthetic data from a domain-adaptation angle:

* risk-difference test: train forecasters on original and on synthetic
  corpora, evaluate all of them on original held-out data, and report the
  mean risk difference (a small difference is evidence the two training
  distributions match);
* risk-ratio test: evaluate one reference model on original and on synthetic
  test data and report the risk ratio (a two-sided pointwise density bound
  between the distributions forces this ratio into the same bounds, which is
  verified exhaustively on finite cases by ``verify_theorem_bound``).
"""

import itertools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import forecaster
from .data import DenseSeries
from .errors import DataError, NumericError
from .seeding import derive_seed, spawn_rng


def _max_workers() -> int:
    env = os.environ.get("CTS_FORGE_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# risk-difference test (training utility)

@dataclass
class TrainedRun:
    corpus: str
    corpus_index: int
    train_seed: int
    mse: float


@dataclass
class RiskDifferenceResult:
    epsilon_hat: float
    se: float
    synthetic_runs: list
    original_runs: list
    n_test: int

    def per_run(self) -> list:
        return [
            {"corpus": r.corpus, "corpus_index": r.corpus_index,
             "train_seed": r.train_seed, "mse": r.mse}
            for r in self.original_runs + self.synthetic_runs
        ]


def _train_and_score(corpus, test, seed, train_cfg, model_kw):
    cfg = forecaster.TrainConfig(
        learning_rate=train_cfg.learning_rate, batch_size=train_cfg.batch_size,
        epochs=train_cfg.epochs, patience=train_cfg.patience, seed=seed,
        val_fraction=train_cfg.val_fraction,
    )
    model = forecaster.train(corpus, cfg, **model_kw)
    return model, forecaster.evaluate(model, test).mse


def risk_difference_test(train_original, synthetic_corpora, test_original,
                         train_seeds, train_cfg=None, **model_kw) -> RiskDifferenceResult:
    """Mean risk gap on original test data, synthetic-trained vs original-trained.

    ``synthetic_corpora`` holds one corpus per generation/symbolization seed;
    every (corpus, train seed) pair yields one run. The reported standard
    error is the plain pooled SE of the difference of the two means.
    """
    if train_cfg is None:
        train_cfg = forecaster.TrainConfig()
    if len(train_seeds) < 1:
        raise DataError("need at least one training seed")
    if not synthetic_corpora or not test_original:
        raise DataError("empty corpus")

    jobs = []
    for s in train_seeds:
        jobs.append(("original", 0, s, train_original, derive_seed(s, "orig")))
    for ci, corpus in enumerate(synthetic_corpora):
        for s in train_seeds:
            jobs.append(("synthetic", ci, s, corpus, derive_seed(s, "syn", ci)))

    def run(job):
        name, ci, s, corpus, seed = job
        try:
            _, mse = _train_and_score(corpus, test_original, seed, train_cfg, model_kw)
        except NumericError as exc:
            raise NumericError(f"{name} corpus {ci}, seed {s}: {exc}") from exc
        return TrainedRun(name, ci, s, mse)

    with ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        runs = list(pool.map(run, jobs))

    orig = [r for r in runs if r.corpus == "original"]
    syn = [r for r in runs if r.corpus == "synthetic"]
    mean_orig = float(np.mean([r.mse for r in orig]))
    mean_syn = float(np.mean([r.mse for r in syn]))

    def sem(values):
        return float(np.std(values, ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0

    se = math.hypot(sem([r.mse for r in syn]), sem([r.mse for r in orig]))
    return RiskDifferenceResult(
        epsilon_hat=mean_syn - mean_orig, se=se,
        synthetic_runs=syn, original_runs=orig, n_test=len(test_original),
    )


# ---------------------------------------------------------------------------
# risk-ratio test (test-data utility)

@dataclass
class RiskRatioResult:
    ratio: float
    mse_on_original: float
    mse_on_synthetic: float
    model_id: str


def risk_ratio_test(model, test_original, test_synthetic,
                    model_id: str = "h_star") -> RiskRatioResult:
    """Risk on synthetic test data over risk on original test data."""
    if not test_original or not test_synthetic:
        raise DataError("empty test set")
    mse_orig = forecaster.evaluate(model, test_original).mse
    if mse_orig <= 0:
        raise NumericError("risk on original test data is zero; ratio undefined")
    mse_syn = forecaster.evaluate(model, test_synthetic).mse
    return RiskRatioResult(mse_syn / mse_orig, mse_orig, mse_syn, model_id)


def train_reference_models(train_original, test_original, train_seeds,
                           train_cfg=None, **model_kw):
    """Train one model per seed; return (runs, best model by test risk).

    Ties on the minimum keep the earliest seed.
    """
    if train_cfg is None:
        train_cfg = forecaster.TrainConfig()
    results = []
    with ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        def run(seed):
            model, mse = _train_and_score(train_original, test_original,
                                          derive_seed(seed, "orig"), train_cfg, model_kw)
            return seed, model, mse
        results = list(pool.map(run, train_seeds))
    best = min(results, key=lambda r: (r[2], train_seeds.index(r[0])))
    return results, best[1], {"seed": best[0], "mse": best[2]}


# ---------------------------------------------------------------------------
# exhaustive verification of the two-sided risk bound on finite cases

@dataclass
class TheoremCheckCase:
    """Finite covariate-shift instance: shared conditional, two marginals."""

    f_p: np.ndarray        # |X|
    f_q: np.ndarray        # |X|
    conditional: np.ndarray  # |X| x |Y|, rows sum to 1
    loss: np.ndarray       # |Y| x |Y|, loss[y_true, y_pred] >= 0

    def __post_init__(self):
        self.f_p = np.asarray(self.f_p, dtype=float)
        self.f_q = np.asarray(self.f_q, dtype=float)
        self.conditional = np.asarray(self.conditional, dtype=float)
        self.loss = np.asarray(self.loss, dtype=float)
        for name, vec in (("f_p", self.f_p), ("f_q", self.f_q)):
            if abs(vec.sum() - 1.0) > 1e-9 or np.any(vec < 0):
                raise DataError(f"{name} must be a probability vector")
        if np.any(np.abs(self.conditional.sum(axis=1) - 1.0) > 1e-9):
            raise DataError("conditional rows must sum to 1")
        if np.any(self.loss < 0):
            raise DataError("loss table must be non-negative")


@dataclass
class TheoremReport:
    c_lower: float
    c_upper: float
    n_hypotheses: int
    max_violation: float
    passed: bool


def verify_theorem_bound(case: TheoremCheckCase, tol: float = 1e-9) -> TheoremReport:
    """Check the two-sided expected-risk bound for every deterministic hypothesis.

    The tight constants are the extreme pointwise density ratios (defined as 1
    where both densities vanish); the report also asserts c_lower <= 1 <=
    c_upper. A violation means an implementation bug, not a property of the
    case.
    """
    f_p, f_q = case.f_p, case.f_q
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where((f_p == 0) & (f_q == 0), 1.0, f_p / f_q)
    c_lower = float(np.min(ratio))
    c_upper = float(np.max(ratio))

    n_x = f_p.shape[0]
    n_y = case.loss.shape[0]
    # per-point expected loss of predicting label j at point x
    point_loss = case.conditional @ case.loss  # |X| x |Y|
    hyps = np.array(list(itertools.product(range(n_y), repeat=n_x)))
    picked = point_loss[np.arange(n_x)[None, :], hyps]  # |H| x |X|
    risk_p = picked @ f_p
    risk_q = picked @ f_q

    viol_low = np.max(c_lower * risk_q - risk_p)
    with np.errstate(invalid="ignore"):
        upper_margin = risk_p - c_upper * risk_q
    if math.isinf(c_upper):
        upper_margin = np.where(risk_q > 0, -np.inf, risk_p)
    viol_up = np.max(upper_margin)
    max_violation = float(max(viol_low, viol_up, (c_lower - 1.0), (1.0 - c_upper)))
    return TheoremReport(c_lower, c_upper, len(hyps), max_violation,
                         passed=bool(max_violation <= tol))


def random_theorem_case(rng, max_domain: int = 6, max_labels: int = 4) -> TheoremCheckCase:
    """Random strictly positive finite case satisfying covariate shift."""
    n_x = int(rng.integers(2, max_domain + 1))
    n_y = int(rng.integers(2, max_labels + 1))

    def simplex(n):
        v = rng.random(n) + 0.05
        return v / v.sum()

    conditional = np.stack([simplex(n_y) for _ in range(n_x)])
    return TheoremCheckCase(simplex(n_x), simplex(n_x), conditional,
                            rng.random((n_y, n_y)) * 2.0)


# ---------------------------------------------------------------------------
# n-gram distributions and Hellinger distance

@dataclass
class NgramDistribution:
    order: int
    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.order not in (1, 2, 3):
            raise DataError("supported n-gram orders are 1, 2, 3")

    @classmethod
    def from_sequences(cls, sequences, order: int) -> "NgramDistribution":
        counts = {}
        for seq in sequences:
            symbols = list(seq.symbols) if hasattr(seq, "symbols") else list(seq)
            for i in range(len(symbols) - order + 1):
                gram = tuple(symbols[i:i + order])
                counts[gram] = counts.get(gram, 0) + 1
        if not counts:
            raise DataError("no n-grams (sequences shorter than the order?)")
        return cls(order, counts)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def probability(self, gram) -> float:
        return self.counts.get(gram, 0) / self.total


def hellinger(p: NgramDistribution, q: NgramDistribution) -> float:
    """(1/sqrt(2)) * l2 distance of square-root probabilities on union support."""
    if p.order != q.order:
        raise DataError(f"order mismatch: {p.order} vs {q.order}")
    support = set(p.counts) | set(q.counts)
    acc = 0.0
    for gram in support:
        acc += (math.sqrt(p.probability(gram)) - math.sqrt(q.probability(gram))) ** 2
    return math.sqrt(acc) / math.sqrt(2.0)


def ngram_profile(train_syms, test_syms, synth_syms, orders=(1, 2, 3)) -> dict:
    """Pairwise Hellinger distances between the three symbol corpora."""
    for name, corpus in (("train", train_syms), ("test", test_syms),
                         ("synthetic", synth_syms)):
        if not corpus:
            raise DataError(f"empty {name} symbol corpus")
    table = {}
    for order in orders:
        tr = NgramDistribution.from_sequences(train_syms, order)
        te = NgramDistribution.from_sequences(test_syms, order)
        sy = NgramDistribution.from_sequences(synth_syms, order)
        table[order] = {
            "train_test": hellinger(tr, te),
            "synth_test": hellinger(sy, te),
            "synth_train": hellinger(sy, tr),
        }
    return table


# ---------------------------------------------------------------------------
# discriminative score

def _classifier_features(series: DenseSeries) -> np.ndarray:
    # squared hour-to-hour jumps expose splice incoherence that raw cell
    # values cannot (cell marginals survive random splicing untouched)
    v = series.values
    jumps = np.diff(v, axis=0) ** 2
    return np.concatenate([v.ravel(), series.mask.ravel().astype(float), jumps.ravel()])


def _series_digest(series: DenseSeries) -> bytes:
    return series.values.tobytes() + series.mask.tobytes()


def _balanced_distinct_sample(original, synthetic, n, rng):
    """Alternately pick up to n per class, never reusing an exact exemplar.

    Bit-identical series shared between the corpora would otherwise leak
    across the train/test split and push accuracy below chance.
    """
    perm_o = rng.permutation(len(original))
    perm_s = rng.permutation(len(synthetic))
    used = set()
    chosen_o, chosen_s = [], []
    io = it = 0
    while len(chosen_o) < n and len(chosen_s) < n:
        while io < len(perm_o) and _series_digest(original[perm_o[io]]) in used:
            io += 1
        if io >= len(perm_o):
            break
        while it < len(perm_s) and _series_digest(synthetic[perm_s[it]]) in used:
            it += 1
        if it >= len(perm_s):
            break
        chosen_o.append(original[perm_o[io]])
        used.add(_series_digest(original[perm_o[io]]))
        chosen_s.append(synthetic[perm_s[it]])
        used.add(_series_digest(synthetic[perm_s[it]]))
        io += 1
        it += 1
    n_eff = min(len(chosen_o), len(chosen_s))
    return chosen_o[:n_eff], chosen_s[:n_eff]


def discriminative_score(original, synthetic, runs: int = 10, seed: int = 0,
                         sample_size: int | None = None, test_fraction: float = 0.25):
    """Mean |0.5 - accuracy| of a real-vs-synthetic logistic classifier.

    Balanced distinct-exemplar samples from both corpora, a fresh held-out
    split per run; returns (mean, sd) over runs. 0 means indistinguishable,
    0.5 perfectly separable.
    """
    from sklearn.linear_model import LogisticRegression

    if not original or not synthetic:
        raise DataError("both corpora must be non-empty")
    n = min(len(original), len(synthetic))
    if sample_size is not None:
        n = min(n, sample_size)

    scores = []
    for r in range(runs):
        rng = spawn_rng(seed, "discriminative", r)
        sample_o, sample_s = _balanced_distinct_sample(original, synthetic, n, rng)
        if len(sample_o) < 8:
            raise DataError(
                f"class balance degenerated: only {len(sample_o)} distinct pairs"
            )
        m = len(sample_o)
        feats = np.stack([_classifier_features(s) for s in sample_o]
                         + [_classifier_features(s) for s in sample_s])
        feats = (feats - feats.mean(axis=0)) / (feats.std(axis=0) + 1e-9)
        labels = np.concatenate([np.zeros(m), np.ones(m)])
        n_test = max(1, int(m * test_fraction))
        order_o = rng.permutation(m)
        order_s = m + rng.permutation(m)
        test_idx = np.concatenate([order_o[:n_test], order_s[:n_test]])
        train_idx = np.concatenate([order_o[n_test:], order_s[n_test:]])
        clf = LogisticRegression(max_iter=2000, random_state=int(derive_seed(seed, r)))
        clf.fit(feats[train_idx], labels[train_idx])
        acc = float(np.mean(clf.predict(feats[test_idx]) == labels[test_idx]))
        scores.append(abs(0.5 - acc))
    return float(np.mean(scores)), float(np.std(scores))


# ---------------------------------------------------------------------------
# confidence intervals, PCA export, cluster agreement

def confidence_interval(mean: float, sd: float, n: int):
    """Two-sided 95% normal interval for a mean estimated from n samples."""
    if n < 2:
        raise DataError("confidence interval needs n >= 2")
    if sd < 0:
        raise DataError("sd must be non-negative")
    half = 1.96 * sd / math.sqrt(n)
    return (mean - half, mean + half)


def pca_project(matrix: np.ndarray, n_components: int = 2):
    """Top principal components via eigen-decomposition of the covariance.

    Components are sign-fixed so each one's largest-magnitude loading is
    positive. Returns (coords, components, eigenvalues).
    """
    x = np.asarray(matrix, dtype=float)
    if x.shape[0] < 3:
        raise DataError("PCA export needs at least 3 rows")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    if eigvals[n_components - 1] <= 1e-12 * max(1.0, eigvals[0]):
        raise DataError(f"data rank below {n_components}")
    comps = eigvecs[:, :n_components].T
    for i in range(n_components):
        j = int(np.argmax(np.abs(comps[i])))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    return centered @ comps.T, comps, eigvals[:n_components]


def pca_export(series, parts=("values",), labels=None):
    """Rows (id, pc1, pc2, label) of a 2-component projection of the corpus."""
    known = {"values", "mask"}
    parts = tuple(parts)
    if not parts or any(p not in known for p in parts):
        raise DataError(f"parts must be drawn from {sorted(known)}")
    if labels is None:
        labels = ["" for _ in series]
    if len(labels) != len(series):
        raise DataError("labels length must match series length")
    rows = []
    for s in series:
        vec = []
        if "values" in parts:
            vec.append(s.values.ravel())
        if "mask" in parts:
            vec.append(s.mask.ravel().astype(float))
        rows.append(np.concatenate(vec))
    coords, _, _ = pca_project(np.stack(rows))
    return [
        (s.stay_id, float(c[0]), float(c[1]), lab)
        for s, c, lab in zip(series, coords, labels)
    ]


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Chance-corrected agreement between two labelings of the same items."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape:
        raise DataError("labelings must have equal length")
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    contingency = np.zeros((len(ua), len(ub)), dtype=np.int64)
    np.add.at(contingency, (ia, ib), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_ij = comb2(contingency).sum()
    sum_a = comb2(contingency.sum(axis=1)).sum()
    sum_b = comb2(contingency.sum(axis=0)).sum()
    total = comb2(a.shape[0])
    expected = sum_a * sum_b / total
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


# ---------------------------------------------------------------------------
# report serialization

def report_jsonable(test: str, config_hash: str, *, epsilon_hat=None, se=None,
                    ratio=None, per_run=None, extra=None) -> dict:
    obj = {
        "test": test,
        "epsilon_hat": epsilon_hat,
        "se": se,
        "ratio": ratio,
        "per_run": per_run if per_run is not None else [],
        "config_hash": config_hash,
        "se_method": "plain",
    }
    if extra:
        obj.update(extra)
    return obj


def write_report(obj: dict, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
