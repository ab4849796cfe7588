import random
import shutil
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clonedet import cli, synth
from clonedet import model as M
from clonedet.extractor import extract_methods
from clonedet.features import ActionBag, MethodRecord, MetricsVector, featurize, metric_hash
from clonedet.pipeline import (
    CATEGORIES,
    HASH,
    MODEL,
    ClonePair,
    RunConfig,
    Span,
    TruthPair,
    bin_similarity,
    bin_tokens,
    category_for_ratio,
    coverage,
    detect,
    detect_corpus,
    eval_recall,
    format_recall,
    load_corpus,
    normalized_similarity,
    read_report,
    read_truth,
    sample_for_precision,
    write_precision_sample,
    write_report,
    write_truth,
)
from clonedet.sharder import ConfigError, size_compatible

FIXTURES = Path(__file__).parent / "fixtures"


def constant_model(logit):
    """A model whose output ignores its input: clone everywhere (>0) or nowhere (<0)."""
    m = M.init(0, (24, 4, 4, 4, 4), (8, 4, 4, 4, 4))
    m.out_w[:] = 0.0
    m.out_b[0] = logit
    return m


ALWAYS, NEVER = constant_model(50.0), constant_model(-50.0)


def write_methods(root, methods, per_file=10, seed=0):
    synth.write_corpus(root, methods, per_file=per_file, seed=seed)
    records, skipped = load_corpus(root, RunConfig())
    assert skipped == 0
    return records


def test_two_copies_pair_by_hash(tmp_path):
    methods = synth.generate_methods(8, seed=1, lo=30)
    (path,) = synth.write_corpus(tmp_path / "a", methods, per_file=8, seed=2)
    (tmp_path / "b").mkdir()
    shutil.copy(path, tmp_path / "b" / "Copy.java")
    records, _ = load_corpus(tmp_path, RunConfig())
    pairs, stats = detect(records, RunConfig(), NEVER)
    halves = {r.file_path for r in records}
    assert len(halves) == 2 and len(records) == 16
    # every method meets its copy and nothing else, since the model says no
    assert len(pairs) == 8
    assert all(p.provenance == HASH and p.score == 1.0 for p in pairs)
    assert all((p.start_a, p.end_a) == (p.start_b, p.end_b) and p.path_a != p.path_b for p in pairs)
    assert stats.hash_hits == 8 and stats.model_hits == 0


def test_listing1_type2_via_hash():
    raws = extract_methods("listing1.java", (FIXTURES / "listing1.java").read_text())
    original, type2 = featurize(raws[:2])
    pairs, stats = detect([original, type2], RunConfig(), NEVER)
    assert [(p.provenance, p.start_a, p.start_b) for p in pairs] == [(HASH, original.start_line, type2.start_line)]


def test_single_method_gives_empty_report():
    (rec,) = featurize(extract_methods("listing1.java", (FIXTURES / "listing1.java").read_text())[:1])
    pairs, stats = detect([rec], RunConfig(), ALWAYS)
    assert pairs == [] and stats.total_pairs == 0


def test_missing_model_is_a_config_error():
    with pytest.raises(ConfigError):
        detect([], RunConfig(), None)
    with pytest.raises(ConfigError):
        detect([], RunConfig(action_threshold=0), ALWAYS)


def fake(i, size, bag, path="F.java"):
    metrics = MetricsVector(NOS=size)
    return MethodRecord(i, path, 10 * i + 1, 10 * i + 9, f"m{i}", size, metrics, ActionBag(bag), metric_hash(metrics))


def test_size_incompatible_pairs_are_never_emitted():
    # 50 and 200 end up in one partition together with 100, yet no pair of the three passes the size rule
    bag = {"get()": 3, "put()": 2}
    records = [fake(0, 50, bag), fake(1, 100, bag), fake(2, 200, bag)]
    for parts in (1, 2, 6):
        pairs, stats = detect(records, RunConfig(partitions=parts), ALWAYS)
        assert pairs == []
        assert stats.size_filtered_pairs == 0
    close = records + [fake(3, 70, bag)]
    pairs, _ = detect(close, RunConfig(), ALWAYS)
    assert {(p.id_a, p.id_b) for p in pairs} == {(0, 3), (1, 3)}


@st.composite
def fake_corpus(draw):
    n = draw(st.integers(2, 40))
    sizes = draw(st.lists(st.integers(15, 400), min_size=n, max_size=n))
    names = [f"a{k}()" for k in range(5)]
    bags = draw(st.lists(st.dictionaries(st.sampled_from(names), st.integers(1, 3), max_size=4), min_size=n, max_size=n))
    return [fake(i, s, b, path=f"F{i % 3}.java") for i, (s, b) in enumerate(zip(sizes, bags))]


@settings(max_examples=60, deadline=None)
@given(fake_corpus(), st.sampled_from([0.3, 0.55, 0.8]), st.sampled_from([0.5, 0.6, 0.8]), st.integers(1, 6),
       st.integers(1, 50))
def test_funnel_and_size_rule_properties(records, theta, gamma, parts, capacity):
    cfg = RunConfig(action_threshold=theta, partition_threshold=gamma, partitions=parts, shard_capacity=capacity)
    pairs, stats = detect(records, cfg, ALWAYS)
    assert stats.total_pairs >= stats.size_filtered_pairs >= stats.action_filtered_pairs >= stats.emitted
    assert stats.emitted == len(pairs)
    by_id = {r.id: r for r in records}
    seen = set()
    for p in pairs:
        a, b = by_id[p.id_a], by_id[p.id_b]
        assert size_compatible(a.token_count, b.token_count, gamma)
        assert (p.path_a, p.start_a) <= (p.path_b, p.start_b)
        assert (p.id_a, p.id_b) not in seen
        seen.add((p.id_a, p.id_b))
        if p.provenance == HASH:
            assert a.metrics == b.metrics and p.score == 1.0
        else:
            assert 0.5 < p.score <= 1.0
    # the filter off admits every size-compatible pair
    unfiltered, ustats = detect(records, RunConfig(partition_threshold=gamma, partitions=parts, action_filter=False), ALWAYS)
    assert ustats.action_filtered_pairs == ustats.size_filtered_pairs == len(unfiltered)
    assert set(pairs) <= set(unfiltered)


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("small")
    rng = random.Random(5)
    names = synth.NamePool(rng)
    methods = synth.generate_methods(120, seed=6)
    mutants = [synth.mutate_t2(m, rng, names) for m in methods[:15]] + [
        synth.mutate_edits(m, rng, names, 2) for m in methods[15:30]]
    write_methods(root, methods + mutants, per_file=15, seed=7)
    return root


def test_reports_are_byte_identical(small_corpus, tmp_path):
    m = M.init(3)
    first, stats, _ = detect_corpus(small_corpus, RunConfig(), m)
    second, _, _ = detect_corpus(small_corpus, RunConfig(), m)
    write_report(first, tmp_path / "a.csv")
    write_report(second, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert stats.hash_hits >= 15
    assert read_report(tmp_path / "a.csv") == first


def test_sharding_does_not_change_the_report(small_corpus):
    records, _ = load_corpus(small_corpus, RunConfig())
    base, _ = detect(records, RunConfig(), ALWAYS)
    for cfg in (RunConfig(partitions=1), RunConfig(shard_capacity=7), RunConfig(partitions=3, shard_capacity=20)):
        assert detect(records, cfg, ALWAYS)[0] == base


def test_report_rows_and_reading(tmp_path):
    p = ClonePair("a/X.java", 3, 12, "b/Y.java", 1, 9, MODEL, 0.8125)
    write_report([p, p], tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text() == "a/X.java,3,12,b/Y.java,1,9,model,0.8125\n"
    (tmp_path / "bad.csv").write_text("a,1,2\n")
    with pytest.raises(ValueError):
        read_report(tmp_path / "bad.csv")


# -- recall ------------------------------------------------------------------


def truth_pair(k, category="MT3", lines=10):
    return TruthPair(Span(f"o/O{k}.java", 2, 1 + lines), Span(f"m/M{k}.java", 5, 4 + lines), category, 80, 90)


def as_report(truth):
    return [ClonePair(t.a.path, t.a.start, t.a.end, t.b.path, t.b.start, t.b.end, HASH, 1.0) for t in truth]


def test_recall_full_and_empty():
    truth = [truth_pair(k, c) for k, c in enumerate(CATEGORIES)]
    full = eval_recall(as_report(truth), truth)
    assert all(row.recall == 1.0 for row in full.values())
    empty = eval_recall([], truth)
    assert all(row.recall == 0.0 for row in empty.values())
    assert "100.0%" in format_recall(full)


def test_subsumption_threshold():
    t = truth_pair(0)
    # covers 8 of the 10 truth lines on both sides
    near = ClonePair(t.a.path, 4, 11, t.b.path, 7, 14, MODEL, 0.9)
    assert coverage(Span(t.a.path, 4, 11), t.a) == 0.8
    assert eval_recall([near], [t])["MT3"].recall == 1.0
    partial = ClonePair(t.a.path, 6, 11, t.b.path, 7, 14, MODEL, 0.9)
    assert eval_recall([partial], [t])["MT3"].recall == 0.0
    # orientation of the reported pair does not matter
    flipped = ClonePair(t.b.path, t.b.start, t.b.end, t.a.path, t.a.start, t.a.end, MODEL, 0.9)
    assert eval_recall([flipped], [t])["MT3"].recall == 1.0
    other_file = ClonePair("z.java", 2, 11, t.b.path, 5, 14, MODEL, 0.9)
    assert eval_recall([other_file], [t])["MT3"].recall == 0.0


def test_small_truth_pairs_are_excluded():
    short = truth_pair(0, lines=5)
    few_tokens = TruthPair(Span("a", 1, 20), Span("b", 1, 20), "T1", 49, 200)
    table = eval_recall([], [short, few_tokens, truth_pair(1, "T1")])
    assert table["MT3"].total == 0 and table["MT3"].recall is None
    assert table["T1"].total == 1


def test_truth_file_round_trip_and_malformed_rows(tmp_path):
    rows = [truth_pair(0), truth_pair(1, "WT3/T4")]
    write_truth(rows, tmp_path / "t.csv")
    with open(tmp_path / "t.csv", "a") as fh:
        fh.write("a,1,2,b,3\n")
        fh.write("a,1,2,b,3,4,T9\n")
        fh.write("a,x,2,b,3,4,T1\n")
        fh.write("a,5,2,b,3,4,T1\n")
    got, bad = read_truth(tmp_path / "t.csv")
    assert got == rows and bad == 4


# -- binning -----------------------------------------------------------------


def test_bin_examples():
    raws = extract_methods("listing1.java", (FIXTURES / "listing1.java").read_text(), min_tokens=0)
    original, type2 = featurize(raws[:2])
    assert bin_similarity(original, original) == "T1"
    assert bin_similarity(original, type2) == "T2"
    assert category_for_ratio(0.75) == "ST3"
    assert [category_for_ratio(r) for r in (1.0, 0.9, 0.8999, 0.7, 0.5, 0.4999, 0.0)] == [
        "VST3", "VST3", "ST3", "ST3", "MT3", "WT3/T4", "WT3/T4"]


def test_normalized_similarity_blinds_names_and_literals():
    (a,) = extract_methods("T.java", "class T { int f(int x) { return x + 1; } }", min_tokens=0)
    (b,) = extract_methods("T.java", "class T { int g(int y) { return y + 7; } }", min_tokens=0)
    (c,) = extract_methods("T.java", "class T { int g(int y) { return y * 7; } }", min_tokens=0)
    assert normalized_similarity(a.tokens, b.tokens) == 1.0 and bin_tokens(a.tokens, b.tokens) == "T2"
    # one operator out of eleven tokens differs
    assert normalized_similarity(a.tokens, c.tokens) == pytest.approx(10 / 11)


# -- precision sampling ------------------------------------------------------


def many_pairs(n):
    return [ClonePair(f"F{k}.java", 1, 9, f"G{k}.java", 1, 9, HASH, 1.0) for k in range(n)]


def test_precision_sampling():
    ten = many_pairs(10)
    assert sample_for_precision(ten, 400, seed=0) == sorted(ten)
    big = many_pairs(1000)
    s1, s2 = sample_for_precision(big, 400, seed=3), sample_for_precision(big, 400, seed=3)
    assert s1 == s2 and len(s1) == 400 and len(set(s1)) == 400
    assert set(s1) <= set(big)
    assert s1 != sample_for_precision(big, 400, seed=4)
    with pytest.raises(ValueError):
        sample_for_precision([], 400)


def test_precision_sample_renders_sources(tmp_path):
    (tmp_path / "A.java").write_text("one\ntwo\nthree\nfour\n")
    out = tmp_path / "sample.txt"
    write_precision_sample([ClonePair("A.java", 2, 3, "A.java", 1, 1, HASH, 1.0)], tmp_path, out)
    text = out.read_text()
    assert "--- A.java:2-3\ntwo\nthree\n" in text and "--- A.java:1-1\none\n" in text


# -- CLI ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def trained_cli_model(small_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    records = out / "records.jsonl"
    assert cli.main(["extract", str(small_corpus), "-o", str(records)]) == 0
    model = out / "model.bin"
    code = cli.main(["train", str(records), "-o", str(model), "--pairs", "300", "--epochs", "2",
                     "--report", str(out / "report.jsonl"), "--roc", str(out / "roc.csv")])
    assert code == 0
    return out, records, model


def test_cli_end_to_end(small_corpus, trained_cli_model, capsys):
    out, records, model = trained_cli_model
    assert (out / "report.jsonl").read_text().count("\n") >= 2
    report = out / "pairs.csv"
    assert cli.main(["detect", str(small_corpus), "--model", str(model), "-o", str(report), "--stats",
                     "--dump-partitions", str(out / "parts.jsonl")]) == 0
    printed = capsys.readouterr().out
    assert "hash_hits:" in printed and "action_filtered_pairs:" in printed
    assert (out / "parts.jsonl").exists()
    # records input gives the same report as the corpus directory
    report2 = out / "pairs2.csv"
    assert cli.main(["detect", str(records), "--model", str(model), "-o", str(report2)]) == 0
    assert report.read_bytes() == report2.read_bytes()
    truth = out / "truth.csv"
    write_truth([truth_pair(0)], truth)
    assert cli.main(["eval-recall", str(report), str(truth)]) == 0
    assert "MT3" in capsys.readouterr().out
    sample = out / "sample.txt"
    assert cli.main(["sample-precision", str(report), "--n", "5", "--root", str(small_corpus), "-o", str(sample)]) == 0
    assert sample.read_text().count("=== pair") == 5


def test_cli_config_file_and_flag_precedence(small_corpus, trained_cli_model, tmp_path, capsys):
    _, records, model = trained_cli_model
    conf = tmp_path / "run.conf"
    conf.write_text(f"# settings\nmodel = {model}\ntheta = 1.0\nstats = yes\n")
    assert cli.main(["--config", str(conf), "detect", str(records), "-o", str(tmp_path / "strict.csv")]) == 0
    strict = capsys.readouterr().out
    assert cli.main(["--config", str(conf), "detect", str(records), "--theta", "0.3", "-o", str(tmp_path / "loose.csv")]) == 0
    loose = capsys.readouterr().out

    def value(text, key):
        return int(next(l for l in text.splitlines() if l.startswith(key + ":")).split(":")[1])

    assert value(strict, "action_filtered_pairs") < value(loose, "action_filtered_pairs")


def test_cli_exit_codes(small_corpus, trained_cli_model, tmp_path):
    _, records, model = trained_cli_model
    out = str(tmp_path / "r.csv")
    assert cli.main(["detect", str(records), "-o", out]) == 1
    assert cli.main(["detect", str(records), "--model", str(tmp_path / "nope.bin"), "-o", out]) == 1
    assert cli.main(["detect", str(records), "--model", str(model), "--theta", "1.5", "-o", out]) == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["detect"])
    assert exc.value.code == 1
    broken = tmp_path / "broken.bin"
    broken.write_bytes(model.read_bytes()[:-8])
    assert cli.main(["detect", str(records), "--model", str(broken), "-o", out]) == 2
    bad_conf = tmp_path / "bad.conf"
    bad_conf.write_text("theta\n")
    assert cli.main(["--config", str(bad_conf), "detect", str(records), "--model", str(model), "-o", out]) == 1
    (tmp_path / "bad.csv").write_text("x,1\n")
    assert cli.main(["eval-recall", str(tmp_path / "bad.csv"), str(tmp_path / "bad.csv")]) == 2
    assert cli.main(["train", str(tmp_path / "missing.jsonl"), "-o", str(tmp_path / "m.bin")]) == 2
