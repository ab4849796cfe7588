import random

import pytest

from clonedet import synth
from clonedet.extractor import extract_methods
from clonedet.pipeline import bin_tokens, normalized_similarity, read_truth, write_truth


def test_generation_is_deterministic():
    a = synth.generate_methods(20, seed=1)
    b = synth.generate_methods(20, seed=1)
    assert [synth.render_method(m) for m in a] == [synth.render_method(m) for m in b]
    assert [synth.render_method(m) for m in a] != [synth.render_method(m) for m in synth.generate_methods(20, seed=2)]


def test_generated_sizes_follow_targets():
    methods = synth.generate_methods(200, seed=3, lo=40, hi=200)
    sizes = [synth.method_tokens(m).token_count for m in methods]
    assert min(sizes) >= 20 and max(sizes) <= 320
    assert 50 <= sorted(sizes)[len(sizes) // 2] <= 150


def test_rendered_classes_parse(tmp_path):
    methods = synth.generate_methods(30, seed=4)
    paths = synth.write_corpus(tmp_path, methods, per_file=7, seed=5)
    assert len(paths) == 5
    found = sum(len([r for r in extract_methods(p.name, p.read_text(), min_tokens=0)
                     if r.name not in synth.API_NAMES]) for p in paths)
    assert found == 30


@pytest.mark.parametrize("seed", range(5))
def test_mutants_land_in_their_bins(seed):
    rng = random.Random(seed)
    names = synth.NamePool(rng)
    base = synth.generate_method(rng, names, 120)
    tokens = lambda m: synth.method_tokens(m).tokens
    assert bin_tokens(tokens(base), tokens(synth.mutate_t1(base))) == "T1"
    assert bin_tokens(tokens(base), tokens(synth.mutate_t2(base, rng, names))) == "T2"
    mt3 = synth.mutate_t3(base, rng, names, (0.5, 0.7))
    if mt3 is not None:
        assert 0.5 <= normalized_similarity(tokens(base), tokens(mt3)) < 0.7


def test_mutation_leaves_the_original_alone():
    rng = random.Random(7)
    names = synth.NamePool(rng)
    base = synth.generate_method(rng, names, 100)
    before = synth.render_method(base)
    synth.mutate_t2(base, rng, names)
    synth.mutate_edits(base, rng, names, 5)
    assert synth.render_method(base) == before


def test_benchmark_truth_is_consistent(tmp_path):
    bench = synth.make_benchmark(tmp_path, {"T1": 3, "T2": 3, "MT3": 3}, seed=8, distractors=12)
    assert [t.category for t in bench.truth] == ["T1"] * 3 + ["T2"] * 3 + ["MT3"] * 3
    assert bench.files == 18 + 2
    for t in bench.truth:
        assert (tmp_path / t.a.path).exists() and (tmp_path / t.b.path).exists()
        assert t.eligible()
    write_truth(bench.truth, tmp_path / "truth.csv")
    assert read_truth(tmp_path / "truth.csv") == (bench.truth, 0)
    with pytest.raises(ValueError):
        synth.make_benchmark(tmp_path / "x", {"T4": 1}, seed=0)
