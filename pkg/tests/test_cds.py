import json

import numpy as np
import pytest

from ctsforge.cds import (
    SLOT,
    Fragment,
    Template,
    build_index,
    desymbolize,
    enumerate_fragments,
    enumerate_index_sets,
    environment_of,
    fragment_of,
    insert,
    runs_of,
    synthesize_series,
    synthesize_symbols,
    template_of,
)
from ctsforge.data import DenseSeries
from ctsforge.errors import DataError
from ctsforge.symbolize import SymbolSequence, build_block_store, random_centroids, segment, symbolize


def seq_of(stay, symbols):
    return SymbolSequence(stay, list(symbols), 3, [(stay, i) for i in range(len(symbols))])


FIG_CORPUS = [
    seq_of("s1", "MANB"),
    seq_of("s2", "MCND"),
    seq_of("s3", "XAYB"),
]


class TestFragmentTemplate:
    def test_runs_of(self):
        assert runs_of([1, 3]) == ((1, 2), (3, 4))
        assert runs_of([0, 1, 2]) == ((0, 3),)
        assert runs_of([5]) == ((5, 6),)

    def test_discontinuous_fragment(self):
        # removing positions 1 and 3 of (M,A,N,B) leaves template (M,*,N,*)
        frag = fragment_of(("M", "A", "N", "B"), [1, 3])
        tpl = template_of(("M", "A", "N", "B"), [1, 3])
        assert frag.spans == (("A",), ("B",))
        assert tpl.symbols == ("M", SLOT, "N", SLOT)

    def test_prefix_fragment(self):
        frag = fragment_of(("A", "B"), [0])
        tpl = template_of(("A", "B"), [0])
        assert frag.spans == (("A",),)
        assert tpl.symbols == (SLOT, "B")

    def test_adjacent_removed_indices_collapse_to_one_slot(self):
        tpl = template_of(("A", "B", "C", "D"), [1, 2])
        assert tpl.symbols == ("A", SLOT, "D")

    def test_full_cover_rejected(self):
        with pytest.raises(DataError):
            template_of(("A", "B"), [0, 1])

    def test_no_adjacent_slots_invariant(self):
        with pytest.raises(DataError):
            Template(("A", SLOT, SLOT))


class TestEnvironment:
    def test_interior_slot_window_1(self):
        assert environment_of(Template(("M", SLOT, "N")), 1).symbols == ("M", SLOT, "N")

    def test_trailing_slot_window_1(self):
        assert environment_of(Template(("M", "N", SLOT)), 1).symbols == ("N", SLOT)

    def test_window_0_keeps_slots_only(self):
        env = environment_of(Template(("M", SLOT, "N", SLOT)), 0)
        assert env.symbols == (SLOT, SLOT)

    def test_wide_window_keeps_whole_template(self):
        tpl = Template(("A", "B", SLOT, "C"))
        assert environment_of(tpl, 10).symbols == tpl.symbols


class TestInsert:
    def test_fig_corpus_case(self):
        tpl = Template(("M", SLOT, "N", SLOT))
        assert insert(tpl, Fragment((("A",), ("B",)))) == ("M", "A", "N", "B")

    def test_pure_fragment(self):
        assert insert(Template((SLOT,)), Fragment((("A", "B", "C"),))) == ("A", "B", "C")

    def test_arity_mismatch(self):
        with pytest.raises(DataError, match="slots"):
            insert(Template((SLOT, "B")), Fragment((("A",), ("C",))))

    def test_round_trip_random(self):
        # oracle: insert(template(s, I), fragment(s, I)) must reproduce s
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(2, 12))
            s = tuple(int(x) for x in rng.integers(0, 6, n))
            size = int(rng.integers(1, n))
            idx = sorted(rng.choice(n, size=size, replace=False).tolist())
            assert insert(template_of(s, idx), fragment_of(s, idx)) == s


class TestEnumeration:
    def test_single_symbol_fragments_count(self):
        for n in (2, 5, 9):
            pairs = list(enumerate_fragments(tuple(range(n)), max_spans=1, max_span_len=1))
            assert len(pairs) == n
            assert all(len(f.spans) == 1 and len(f.spans[0]) == 1 for f, _ in pairs)

    def test_excludes_full_sequence(self):
        for runs in enumerate_index_sets(4, max_spans=2, max_span_len=4):
            covered = sum(b - a for a, b in runs)
            assert covered < 4

    def test_runs_respect_limits(self):
        for runs in enumerate_index_sets(8, max_spans=2, max_span_len=2):
            assert 1 <= len(runs) <= 2
            assert all(1 <= b - a <= 2 for a, b in runs)
            for (a1, b1), (a2, b2) in zip(runs, runs[1:]):
                assert a2 > b1  # gap keeps runs maximal

    def test_deterministic_order(self):
        a = list(enumerate_index_sets(6, 2, 2))
        b = list(enumerate_index_sets(6, 2, 2))
        assert a == b


class TestIndex:
    def test_fig_corpus_maps(self):
        idx = build_index(FIG_CORPUS, window=1)
        templates = idx.frg_to_tpl[(("A",), ("B",))]
        assert ("M", SLOT, "N", SLOT) in templates
        assert ("X", SLOT, "Y", SLOT) in templates

    def test_consistency_between_maps(self):
        idx = build_index(FIG_CORPUS, window=1)
        for frg, templates in idx.frg_to_tpl.items():
            for tpl in templates:
                assert frg in idx.tpl_to_frg[tpl]

    def test_serialized_form_deterministic(self):
        a = json.dumps(build_index(FIG_CORPUS, window=1).to_jsonable(), sort_keys=True)
        b = json.dumps(build_index(FIG_CORPUS, window=1).to_jsonable(), sort_keys=True)
        assert a == b

    def test_empty_dataset_errors(self):
        with pytest.raises(DataError):
            build_index([], window=1)


class TestSynthesis:
    def test_fig_corpus_yields_expected(self):
        idx = build_index(FIG_CORPUS, window=1)
        got = {syms for syms, _ in synthesize_symbols(idx, seed=0, budget=50)}
        assert tuple("XCYD") in got

    def test_single_template_corpus_yields_nothing(self):
        corpus = [seq_of("a", "MAN"), seq_of("b", "MAN")]
        idx = build_index(corpus, window=1)
        assert list(synthesize_symbols(idx, seed=0, budget=10)) == []

    def test_budget_zero(self):
        idx = build_index(FIG_CORPUS, window=1)
        assert list(synthesize_symbols(idx, seed=0, budget=0)) == []

    def test_novelty_vs_parents(self):
        idx = build_index(FIG_CORPUS, window=1)
        corpus_syms = {tuple(s.symbols) for s in FIG_CORPUS}
        for syms, lineage in synthesize_symbols(idx, seed=3, budget=50):
            # with this corpus every yield is genuinely new
            assert syms not in corpus_syms

    def test_exclude_corpus_filter(self):
        corpus = [seq_of("a", "MAB"), seq_of("b", "MCB"), seq_of("c", "XAB")]
        idx = build_index(corpus, window=0)
        corpus_syms = {tuple(s.symbols) for s in corpus}
        for syms, _ in synthesize_symbols(idx, seed=0, budget=100, exclude=corpus_syms):
            assert syms not in corpus_syms

    def test_unigram_closure(self):
        idx = build_index(FIG_CORPUS, window=1)
        vocab = {s for seq in FIG_CORPUS for s in seq.symbols}
        for syms, _ in synthesize_symbols(idx, seed=1, budget=50):
            assert set(syms) <= vocab

    def test_deterministic_stream(self):
        idx = build_index(FIG_CORPUS, window=1)
        a = [syms for syms, _ in synthesize_symbols(idx, seed=7, budget=30)]
        b = [syms for syms, _ in synthesize_symbols(idx, seed=7, budget=30)]
        assert a == b

    def test_fixed_length_filter(self):
        corpus = [
            seq_of("a", "MANB"), seq_of("b", "MCND"), seq_of("c", "XAYB"),
        ]
        idx = build_index(corpus, window=1)
        for syms, _ in synthesize_symbols(idx, seed=0, budget=50, fixed_length=4):
            assert len(syms) == 4


def make_series(t, f, seed, stay):
    rng = np.random.default_rng(seed)
    mask = (rng.random((t, f)) < 0.85).astype(np.int8)
    values = rng.normal(size=(t, f)) * mask
    return DenseSeries(stay, values, mask, [f"f{i}" for i in range(f)])


class TestDesymbolize:
    def test_same_stay_round_trip(self):
        # template and fragment from one stay, covering it, rebuild it exactly
        s = make_series(12, 2, seed=0, stay="src")
        store = build_block_store([s], 3)
        symbols = ("p", "q", "r", "t")
        idx_set = [1, 3]
        tpl = template_of(symbols, idx_set, "src")
        frag = fragment_of(symbols, idx_set, "src")
        from ctsforge.cds import Lineage

        lineage = Lineage(tpl.symbols, frag.spans, "src", tpl.source[1], "src", frag.source[1])
        syn = desymbolize(symbols, lineage, store, features=s.features)
        assert np.array_equal(syn.series.values, s.values)
        assert np.array_equal(syn.series.mask, s.mask)

    def test_resymbolization_reproduces_symbols(self):
        corpus = [make_series(24, 2, seed=i, stay=f"s{i}") for i in range(6)]
        blocks = [b for s in corpus for b in segment(s, 3)]
        space = random_centroids(blocks, 5, seed=0)
        seqs = [symbolize(s, space, 3) for s in corpus]
        idx = build_index(seqs, window=1)
        items = synthesize_series(idx, corpus, 3, seed=1, budget=10)
        assert items, "synthesis produced nothing"
        for item in items:
            again = symbolize(item.series, space, 3)
            assert tuple(again.symbols) == item.symbols

    def test_output_length_four_blocks(self):
        corpus = [make_series(12, 2, seed=i, stay=f"t{i}") for i in range(8)]
        blocks = [b for s in corpus for b in segment(s, 3)]
        space = random_centroids(blocks, 4, seed=2)
        seqs = [symbolize(s, space, 3) for s in corpus]
        idx = build_index(seqs, window=1)
        items = synthesize_series(idx, corpus, 3, seed=0, budget=5, fixed_length=4)
        assert items
        for item in items:
            assert item.series.horizon == 4 * 3

    def test_unresolved_provenance_errors(self):
        from ctsforge.cds import Lineage

        lineage = Lineage((SLOT, "q"), (("p",),), "ghost", ((0, 1),), "ghost", ((0, 1),))
        with pytest.raises(DataError, match="provenance"):
            desymbolize(("p", "q"), lineage, {})
