"""Compositional synthesis of symbol sequences and their realization as series.

A fragment is the tuple of maximal consecutive runs of a removed index set; the
template is the remainder with each run collapsed to one slot marker; the
environment is the template's slot-adjacent context within a window. Two
fragments are interchangeable when they occur inside templates whose
environments match exactly; substituting one for the other in a further
template produces a new sequence. Realization back to real values copies the
raw blocks the source symbols point at, so re-symbolizing a synthetic series
under the generating symbol space reproduces its symbol string exactly.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .data import DenseSeries
from .errors import DataError
from .seeding import spawn_rng

#: slot marker inside template/environment tuples; symbols must never equal it
SLOT = "*"


@dataclass(frozen=True)
class Fragment:
    spans: tuple  # tuple of symbol tuples, one per consecutive run
    source: tuple | None = None  # (stay_id, runs) where runs = ((start, stop), ...)

    def __post_init__(self):
        if not self.spans or any(len(s) == 0 for s in self.spans):
            raise DataError("fragment spans must be non-empty")

    def __len__(self):
        return sum(len(s) for s in self.spans)


@dataclass(frozen=True)
class Template:
    symbols: tuple  # symbols with SLOT markers, no two adjacent
    source: tuple | None = None

    def __post_init__(self):
        for a, b in zip(self.symbols, self.symbols[1:]):
            if a == SLOT and b == SLOT:
                raise DataError("adjacent slots must be reduced to one")
        if self.slot_count < 1:
            raise DataError("template needs at least one slot")

    @property
    def slot_count(self) -> int:
        return sum(1 for s in self.symbols if s == SLOT)


@dataclass(frozen=True)
class Environment:
    symbols: tuple
    window: int


def runs_of(index_set) -> tuple:
    """Maximal consecutive runs of a 0-based index set, as (start, stop) pairs."""
    idx = sorted(set(index_set))
    if not idx:
        raise DataError("empty index set")
    runs, start, prev = [], idx[0], idx[0]
    for i in idx[1:]:
        if i == prev + 1:
            prev = i
        else:
            runs.append((start, prev + 1))
            start = prev = i
    runs.append((start, prev + 1))
    return tuple(runs)


def fragment_of(seq, index_set, stay_id=None) -> Fragment:
    runs = runs_of(index_set)
    spans = tuple(tuple(seq[a:b]) for a, b in runs)
    return Fragment(spans, source=(stay_id, runs))


def template_of(seq, index_set, stay_id=None) -> Template:
    """Remainder of ``seq`` with each removed run collapsed to one slot."""
    runs = runs_of(index_set)
    removed = set()
    for a, b in runs:
        removed.update(range(a, b))
    if len(removed) >= len(seq):
        raise DataError("index set must not cover the whole sequence")
    out, i = [], 0
    while i < len(seq):
        if i in removed:
            out.append(SLOT)
            while i in removed:
                i += 1
        else:
            out.append(seq[i])
            i += 1
    return Template(tuple(out), source=(stay_id, runs))


def environment_of(template: Template, window: int) -> Environment:
    """Subsequence of the template at positions within ``window`` of a slot."""
    syms = template.symbols
    n = len(syms)
    keep = []
    for i in range(n):
        lo = max(0, i - window)
        hi = min(n, i + window + 1)
        if any(syms[j] == SLOT for j in range(lo, hi)):
            keep.append(syms[i])
    return Environment(tuple(keep), window)


def insert(template: Template, fragment: Fragment) -> tuple:
    """Replace the template's slots with the fragment's spans, in order."""
    if template.slot_count != len(fragment.spans):
        raise DataError(
            f"template has {template.slot_count} slots, fragment {len(fragment.spans)} spans"
        )
    out, j = [], 0
    for s in template.symbols:
        if s == SLOT:
            out.extend(fragment.spans[j])
            j += 1
        else:
            out.append(s)
    return tuple(out)


def enumerate_index_sets(length: int, max_spans: int, max_span_len: int):
    """All index sets with <= max_spans runs of <= max_span_len each.

    Never yields the full sequence. Deterministic order: span count, then
    run positions lexicographically.
    """
    if length < 2:
        return
    single = []
    for span_len in range(1, min(max_span_len, length) + 1):
        for start in range(0, length - span_len + 1):
            if span_len == length:
                continue
            single.append((start, start + span_len))
    for run in sorted(single):
        yield (run,)
    if max_spans < 2:
        return

    def extend(prefix, n_spans):
        # a gap of >= 1 before each new run keeps runs maximal and the
        # combined set a strict subset of the sequence
        last_stop = prefix[-1][1]
        for span_len in range(1, max_span_len + 1):
            for start in range(last_stop + 1, length - span_len + 1):
                runs = prefix + ((start, start + span_len),)
                yield runs
                if n_spans + 1 < max_spans:
                    yield from extend(runs, n_spans + 1)

    for run in sorted(single):
        yield from extend((run,), 1)


def enumerate_fragments(seq, max_spans: int = 2, max_span_len: int = 2, stay_id=None):
    """(Fragment, Template) pairs for every admissible index set of ``seq``."""
    symbols = tuple(seq)
    for runs in enumerate_index_sets(len(symbols), max_spans, max_span_len):
        idx = [i for a, b in runs for i in range(a, b)]
        yield fragment_of(symbols, idx, stay_id), template_of(symbols, idx, stay_id)


@dataclass
class SynthesisIndex:
    """Fragment/template/environment co-occurrence maps driving synthesis."""

    window: int
    max_spans: int
    max_span_len: int
    frg_to_tpl: dict = field(default_factory=dict)
    tpl_to_frg: dict = field(default_factory=dict)
    env_to_tpl: dict = field(default_factory=dict)
    tpl_sources: dict = field(default_factory=dict)  # tpl symbols -> [(stay, runs)]
    frg_sources: dict = field(default_factory=dict)  # frg spans -> [(stay, runs)]
    n_sequences: int = 0
    n_entries: int = 0

    def to_jsonable(self) -> dict:
        return {
            "window": self.window,
            "max_spans": self.max_spans,
            "max_span_len": self.max_span_len,
            "n_sequences": self.n_sequences,
            "n_entries": self.n_entries,
            "frg_to_tpl": [[ [list(s) for s in k], [list(t) for t in v] ]
                           for k, v in self.frg_to_tpl.items()],
            "tpl_to_frg": [[ list(k), [[list(s) for s in f] for f in v] ]
                           for k, v in self.tpl_to_frg.items()],
            "env_to_tpl": [[ list(k), [list(t) for t in v] ]
                           for k, v in self.env_to_tpl.items()],
            "tpl_sources": [[ list(k), [[s, [list(r) for r in runs]] for s, runs in v] ]
                            for k, v in self.tpl_sources.items()],
            "frg_sources": [[ [list(s) for s in k], [[s, [list(r) for r in runs]] for s, runs in v] ]
                            for k, v in self.frg_sources.items()],
        }


def build_index(dataset, window: int = 1, max_spans: int = 2, max_span_len: int = 2) -> SynthesisIndex:
    """Populate the three co-occurrence maps over all enumerated pairs.

    ``dataset`` is a list of SymbolSequence (anything with .stay_id and
    .symbols works). Map value lists keep first-seen order; construction is
    deterministic for a fixed input order.
    """
    if not dataset:
        raise DataError("empty dataset")
    index = SynthesisIndex(window, max_spans, max_span_len)
    interned = {}  # one object per distinct key so the maps share references

    def canon(key):
        return interned.setdefault(key, key)

    for seq in dataset:
        symbols = tuple(seq.symbols)
        if len(symbols) < 2:
            continue
        index.n_sequences += 1
        for frg, tpl in enumerate_fragments(symbols, max_spans, max_span_len, seq.stay_id):
            env = environment_of(tpl, window)
            frg_key, tpl_key, env_key = canon(frg.spans), canon(tpl.symbols), canon(env.symbols)
            index.frg_to_tpl.setdefault(frg_key, []).append(tpl_key)
            index.tpl_to_frg.setdefault(tpl_key, []).append(frg_key)
            index.env_to_tpl.setdefault(env_key, []).append(tpl_key)
            index.tpl_sources.setdefault(tpl_key, []).append(tpl.source)
            index.frg_sources.setdefault(frg_key, []).append(frg.source)
            index.n_entries += 1
    return index


@dataclass(frozen=True)
class Lineage:
    template: tuple
    fragment: tuple
    template_stay: str
    template_runs: tuple  # removed runs in the template's source stay
    fragment_stay: str
    fragment_runs: tuple  # runs the fragment spans occupy in its source stay

    def to_jsonable(self) -> dict:
        return {
            "template_stay": self.template_stay,
            "fragment_stay": self.fragment_stay,
            "template": list(self.template),
            "fragment": [list(s) for s in self.fragment],
            "template_runs": [list(r) for r in self.template_runs],
            "fragment_runs": [list(r) for r in self.fragment_runs],
        }


def _env_key(tpl_symbols: tuple, window: int) -> tuple:
    return environment_of(Template(tpl_symbols), window).symbols


def synthesize_symbols(index: SynthesisIndex, seed: int, budget: int,
                       fixed_length: int | None = None,
                       max_per_fragment: int | None = 1,
                       exclude: set | None = None):
    """Stream compositionally synthesized symbol sequences with lineage.

    Every yielded sequence comes from a fragment shared by two distinct
    templates plus an exchange fragment drawn from an environment-matched
    template, and differs from all three parent sequences. Candidate lists
    are shuffled with the run seed; the stream stops at ``budget`` items or
    when a full pass over the fragments yields nothing new.

    ``max_per_fragment`` caps accepted yields per fragment per pass so a
    single fragment cannot flood a finite budget (None removes the cap).
    ``fixed_length`` drops candidates whose flattened length differs from it.
    ``exclude`` drops candidates whose symbols are in the given set.
    """
    if budget <= 0:
        return
    rng = spawn_rng(seed, "synthesize")
    frg_list = list(index.frg_to_tpl)
    produced = 0
    while True:
        yielded_this_pass = 0
        order = list(frg_list)
        rng.shuffle(order)
        for frg in order:
            accepted_for_frg = 0
            tpl_c_list = list(index.frg_to_tpl[frg])
            rng.shuffle(tpl_c_list)
            for tpl_c in tpl_c_list:
                tpl_a_list = [t for t in tpl_c_list if t != tpl_c]
                rng.shuffle(tpl_a_list)
                done_with_frg = False
                for tpl_a in tpl_a_list:
                    env = _env_key(tpl_a, index.window)
                    for tpl_b in index.env_to_tpl.get(env, ()):
                        for frg_b in index.tpl_to_frg[tpl_b]:
                            if frg_b == frg:
                                continue
                            s_syn = insert(Template(tpl_c), Fragment(frg_b))
                            if fixed_length is not None and len(s_syn) != fixed_length:
                                continue
                            parents = {
                                insert(Template(tpl_a), Fragment(frg)),
                                insert(Template(tpl_c), Fragment(frg)),
                                insert(Template(tpl_b), Fragment(frg_b)),
                            }
                            if s_syn in parents:
                                continue
                            if exclude is not None and s_syn in exclude:
                                continue
                            tpl_stay, tpl_runs = _pick(index.tpl_sources[tpl_c], rng)
                            frg_stay, frg_runs = _pick(index.frg_sources[frg_b], rng)
                            yield s_syn, Lineage(tpl_c, frg_b, tpl_stay, tpl_runs,
                                                 frg_stay, frg_runs)
                            produced += 1
                            yielded_this_pass += 1
                            accepted_for_frg += 1
                            if produced >= budget:
                                return
                            if (max_per_fragment is not None
                                    and accepted_for_frg >= max_per_fragment):
                                done_with_frg = True
                                break
                        if done_with_frg:
                            break
                    if done_with_frg:
                        break
                if done_with_frg:
                    break
        if yielded_this_pass == 0:
            return  # index exhausted; caller sees a shorter stream


def _pick(sources, rng):
    if len(sources) == 1:
        return sources[0]
    return sources[int(rng.integers(len(sources)))]


@dataclass
class SyntheticSeries:
    series: DenseSeries
    symbols: tuple
    lineage: Lineage

    def to_jsonable(self) -> dict:
        obj = self.series.to_jsonable()
        lin = self.lineage.to_jsonable()
        lin["symbols"] = list(self.symbols)
        obj["lineage"] = lin
        return obj


def desymbolize(symbols: tuple, lineage: Lineage, block_store: dict,
                out_id: str = "syn", features: list | None = None) -> SyntheticSeries:
    """Realize a synthetic symbol sequence by copying raw provenance blocks.

    Non-slot template positions take the template source stay's blocks at the
    kept indices; each slot takes the fragment source stay's blocks at the
    corresponding removed run. Blocks are copied verbatim in temporal order.
    """
    tpl_blocks = block_store.get(lineage.template_stay)
    frg_blocks = block_store.get(lineage.fragment_stay)
    if tpl_blocks is None or frg_blocks is None:
        raise DataError(
            f"unresolved provenance: {lineage.template_stay} / {lineage.fragment_stay}"
        )
    removed = set()
    for a, b in lineage.template_runs:
        removed.update(range(a, b))
    kept = [i for i in range(len(tpl_blocks)) if i not in removed]
    span_indices = [list(range(a, b)) for a, b in lineage.fragment_runs]

    blocks, kept_iter, span_iter = [], iter(kept), iter(span_indices)
    for s in lineage.template:
        if s == SLOT:
            try:
                span = next(span_iter)
            except StopIteration:
                raise DataError("lineage fragment runs do not cover template slots")
            for i in span:
                if i >= len(frg_blocks):
                    raise DataError(f"block {i} missing in stay {lineage.fragment_stay}")
                blocks.append(frg_blocks[i])
        else:
            i = next(kept_iter)
            blocks.append(tpl_blocks[i])

    values = np.concatenate([b.data for b in blocks], axis=0)
    mask = np.concatenate([b.mask for b in blocks], axis=0)
    if features is None:
        features = [f"f{i}" for i in range(values.shape[1])]
    series = DenseSeries(out_id, values, mask, list(features))
    return SyntheticSeries(series, symbols, lineage)


def synthesize_series(index: SynthesisIndex, corpus, delta: int, seed: int,
                      budget: int, fixed_length: int | None = None,
                      max_per_fragment: int | None = 1):
    """Full synthesis: stream symbol sequences and realize each as a series."""
    from .symbolize import build_block_store

    store = build_block_store(corpus, delta)
    features = corpus[0].features
    out = []
    stream = synthesize_symbols(index, seed, budget, fixed_length=fixed_length,
                                max_per_fragment=max_per_fragment)
    for i, (symbols, lineage) in enumerate(stream):
        out.append(desymbolize(symbols, lineage, store,
                               out_id=f"syn-{i:06d}", features=features))
    return out


def write_synthetic_ndjson(items, path):
    with open(path, "w", encoding="utf-8") as fh:
        for it in items:
            fh.write(json.dumps(it.to_jsonable(), separators=(",", ":")) + "\n")
