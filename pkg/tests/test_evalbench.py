import csv
import io
import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import random_graph
from tagcbm.conceptspace.llm import FixtureStore, ReplayClient
from tagcbm.evalbench import (
    CSV_COLUMNS,
    ProbeReport,
    ProbeRow,
    SimulatedLLM,
    SynthConfig,
    adversarial_split,
    bacc,
    confusion_matrix,
    default_majority,
    macro_f1,
    metric_report,
    ood_split,
    regular_split,
    summary_csv,
    synth_planted,
    synthetic_vocabulary,
    write_synthetic_fixtures,
)
from tagcbm.evalbench.probe import leakage_probe
from tagcbm.graphcore import induced_edges
from tagcbm.ibgate import GateConfig
from tagcbm.nn.layers import GcnEncoderParams
from tagcbm.predictor import PredictorConfig


# --- metrics ------------------------------------------------------------------


def fraction_metrics(pred, true, C):
    cm = [[0] * C for _ in range(C)]
    for p, t in zip(pred, true):
        cm[t][p] += 1
    f1s, recalls = [], []
    for c in range(C):
        tp = cm[c][c]
        support = sum(cm[c])
        predicted = sum(cm[r][c] for r in range(C))
        f1s.append(Fraction(2 * tp, support + predicted) if support + predicted else Fraction(0))
        if support:
            recalls.append(Fraction(tp, support))
    return sum(f1s) / C, sum(recalls) / len(recalls)


def test_metric_examples():
    assert macro_f1([0, 1, 2], [0, 1, 2]) == 1.0 and bacc([0, 1, 2], [0, 1, 2]) == 1.0
    assert macro_f1([0, 0, 0, 0], [0, 0, 1, 1]) == pytest.approx(1 / 3, abs=1e-15)
    assert bacc([0, 0, 1, 0], [0, 0, 1, 1]) == pytest.approx(0.75)
    for C in (2, 3, 5):
        y = np.repeat(np.arange(C), 4)
        assert bacc(np.zeros_like(y), y) == pytest.approx(1 / C)


def test_metric_errors():
    with pytest.raises(ValueError):
        macro_f1([], [])
    with pytest.raises(ValueError):
        bacc([0, 1], [0])
    with pytest.raises(ValueError):
        confusion_matrix([0, -1], [0, 1])
    with pytest.raises(ValueError):
        confusion_matrix([0, 3], [0, 1], n_classes=3)


def test_metrics_against_fraction_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        C = int(rng.integers(2, 6))
        n = int(rng.integers(1, 40))
        pred, true = rng.integers(0, C, n), rng.integers(0, C, n)
        f1, ba = fraction_metrics(pred.tolist(), true.tolist(), C)
        assert abs(macro_f1(pred, true, C) - float(f1)) <= 1e-12
        assert abs(bacc(pred, true, C) - float(ba)) <= 1e-12


def test_metric_report_consistent():
    rep = metric_report([0, 1, 1, 2], [0, 1, 2, 2], 3, {"setting": "regular"})
    assert rep.macro_f1 == macro_f1([0, 1, 1, 2], [0, 1, 2, 2], 3)
    assert rep.confusion == [[1, 0, 0], [0, 1, 0], [0, 1, 1]]
    assert rep.to_json()["setting"] == {"setting": "regular"}


# --- splits -------------------------------------------------------------------


def check_partition(split, labeled):
    parts = [split.train, split.val, split.test, split.heldout]
    allnodes = np.concatenate(parts)
    assert len(allnodes) == len(set(allnodes.tolist())) == len(labeled)
    assert set(allnodes.tolist()) == set(labeled)


def test_split_partition_over_seeds():
    labels = np.array([0, 1, 2, -1] * 25)
    labeled = np.flatnonzero(labels >= 0).tolist()
    for seed in range(100):
        reg = regular_split(labels, seed=seed)
        check_partition(reg, labeled)
        assert (len(reg.train), len(reg.val), len(reg.test)) == (15, 15, 37)
        check_partition(ood_split(labels, 3.0, seed=seed), labeled)


def test_split_ratio_validation():
    with pytest.raises(ValueError):
        regular_split([0, 1], ratios=(0.6, 0.6, 0.1))
    with pytest.raises(ValueError):
        ood_split([0, 1], 0.5)
    with pytest.raises(ValueError):
        ood_split([0, 1], 2.0, majority_classes=[])


def test_ood_gamma_one_equals_regular():
    labels = np.random.default_rng(1).integers(0, 4, 90)
    for seed in range(5):
        a, b = regular_split(labels, seed=seed), ood_split(labels, 1.0, seed=seed)
        for x, y in zip(a.parts().values(), b.parts().values()):
            assert np.array_equal(x, y)


def test_ood_all_majority_equals_regular():
    labels = np.random.default_rng(2).integers(0, 3, 60)
    a, b = regular_split(labels, seed=4), ood_split(labels, 5.0, majority_classes=[0, 1, 2], seed=4)
    assert all(np.array_equal(x, y) for x, y in zip(a.parts().values(), b.parts().values()))


def test_ood_shifts_training_distribution():
    labels = np.repeat([0, 1, 2, 3], 100)
    assert default_majority(4) == [0, 1] and default_majority(5) == [0, 1, 2]
    frac = np.mean([np.isin(labels[ood_split(labels, 5.0, seed=s).train], [0, 1]).mean() for s in range(20)])
    assert frac > 0.75
    split = ood_split(labels, 5.0, seed=0)
    assert split.params == {"gamma": 5.0, "majority": [0, 1]} and split.setting == "ood"


def test_adversarial_touches_only_training_edges():
    g = random_graph(np.random.default_rng(3), 120, 0.05, labels=3)
    for rho in (0.05, 0.3):
        split, adv = adversarial_split(g, rho, seed=1)
        train = set(split.train.tolist())
        base = induced_edges(g.edges, train)
        assert adv.base_edges == len(base)
        assert len(adv.dropped) == len(adv.added) == math.floor(rho * len(base))
        assert adv.dropped <= base
        assert all(u in train and v in train for u, v in adv.added)
        outside = g.edges - base
        assert outside <= adv.train_graph.edges
        assert adv.train_graph.edges - outside == (base - adv.dropped) | adv.added
        assert split.params == {"rho": rho}


def test_split_json():
    split = regular_split([0, 1, 0, 1, 0], seed=3)
    obj = split.to_json()
    assert obj["setting"] == "regular" and obj["seed"] == 3
    assert sorted(obj["train"] + obj["val"] + obj["test"] + obj["heldout"]) == list(range(5))


# --- synthetic substrate ------------------------------------------------------


def test_noiseless_synth_is_separable():
    ds = synth_planted(SynthConfig(sigma=0.0, p_in=0.0, p_out=0.0, nodes_per_class=10))
    assert not ds.graph.edges
    X = ds.table.matrix(ds.graph.texts)
    cent = ds.centroids()
    cent /= np.linalg.norm(cent, axis=1, keepdims=True)
    np.testing.assert_allclose(X, cent[ds.graph.labels], atol=1e-12)
    concepts = ds.table.matrix([c for y in sorted(ds.planted) for c in ds.planted[y]])
    nearest = (X @ concepts.T).argmax(axis=1) // ds.config.concepts_per_class
    assert (nearest == ds.graph.labels).all()


def test_planted_concepts_own_class_highest():
    ds = synth_planted(SynthConfig(sigma=0.1, seed=5))
    X = ds.table.matrix(ds.graph.texts)
    for y, names in ds.planted.items():
        means = np.stack([X[ds.graph.labels == c] @ ds.table.matrix(names).T for c in range(4)]).mean(axis=1)
        assert (means.argmax(axis=0) == y).all()


def test_edge_counts_binomial():
    cfg = SynthConfig(nodes_per_class=60)
    C, n = cfg.classes, cfg.nodes_per_class
    in_pairs = C * n * (n - 1) // 2
    out_pairs = C * (C - 1) // 2 * n * n
    mean = cfg.p_in * in_pairs + cfg.p_out * out_pairs
    var = cfg.p_in * (1 - cfg.p_in) * in_pairs + cfg.p_out * (1 - cfg.p_out) * out_pairs
    counts = []
    for seed in range(50):
        g = synth_planted(cfg, seed=seed).graph
        same = sum(g.labels[u] == g.labels[v] for u, v in g.edges)
        counts.append((len(g.edges), same))
    total = np.array([c for c, _ in counts])
    assert abs(total.mean() - mean) <= 3 * math.sqrt(var / 50)
    within = np.array([s for _, s in counts])
    sd_in = math.sqrt(cfg.p_in * (1 - cfg.p_in) * in_pairs / 50)
    assert abs(within.mean() - cfg.p_in * in_pairs) <= 3 * sd_in


def test_synth_deterministic_and_shared_vocabulary():
    a, b = synth_planted(seed=3), synth_planted(seed=3)
    assert a.graph == b.graph
    c = synth_planted(seed=4, concept_seed=3)
    for name in a.concepts:
        np.testing.assert_array_equal(a.table[name], c.table[name])
    assert a.concepts.provenance.count("planted") == 12 and len(a.distractors) == 12


def test_vocabulary_and_simulator():
    ds = synth_planted(SynthConfig(nodes_per_class=20))
    vocab = synthetic_vocabulary(ds)
    assert len(vocab.concepts) == 4 * 3 * 4 + 12
    facet = vocab.table["class0_concept0_facet1"]
    assert facet @ vocab.table["class0_concept0"] == pytest.approx(0.7, abs=1e-12)
    llm = SimulatedLLM(vocab)
    assert llm.query("global_v1", {"dataset_domain": "x", "category": "class2"}) == vocab.global_lists["class2"]
    with pytest.raises(KeyError):
        llm.query("other_v1", {})


def test_recorded_fixtures_replay(tmp_path):
    ds = synth_planted(SynthConfig(nodes_per_class=8, p_in=0.3))
    llm = SimulatedLLM(synthetic_vocabulary(ds))
    store = FixtureStore(tmp_path / "fx.jsonl")
    size = write_synthetic_fixtures(store, llm, [ds.graph], k=1)
    assert size > 0 and size <= 4 + 2 * ds.graph.num_nodes
    replay = ReplayClient(FixtureStore(tmp_path / "fx.jsonl"))
    from tagcbm.conceptspace.retrieval import annotate_instance, prompt_graphml
    from tagcbm.evalbench.synth import SYNTH_DETAILS
    doc = prompt_graphml(ds.graph, 3, 1)
    answer = annotate_instance(doc, SYNTH_DETAILS, replay)
    assert len(answer) == 10 and answer == llm.query("annotation_v1", {"graphml": doc})


# --- probe and report ---------------------------------------------------------


def test_probe_report_structure():
    ds = synth_planted(SynthConfig(nodes_per_class=25))
    enc = GcnEncoderParams.init(64, 64, seed=0)
    rep = leakage_probe(ds.graph, ds.table, enc, ds.concepts, K_values=(2, 4, 99), seeds=(0, 1),
                        gate_config=GateConfig(epochs=20), predictor_config=PredictorConfig(max_epochs=30))
    assert len(rep.rows) == 2 * 2 * 2  # K=99 exceeds the candidate count and is skipped
    assert {(r.setting, r.param) for r in rep.rows} == {("regular", None), ("ood", 5.0)}
    summary = rep.summary()
    assert len(summary) == 4 and all(s["seeds"] == [0, 1] for s in summary)
    assert rep.mean_gap("regular", 2) == pytest.approx(np.mean([r.gap for r in rep.rows
                                                                if r.setting == "regular" and r.K == 2]))
    assert len(rep.csv_records()) == 16
    assert rep.to_json()["rows"][0]["gap"] == rep.rows[0].gap


def test_summary_csv():
    rows = ProbeReport([ProbeRow("ood", 5.0, 5, 0, 0.9, 0.7, 0.91, 0.72)]).csv_records()
    rows.append({"setting": "regular", "param": None, "K": 8, "seed": 1, "macro_f1": 1, "bacc": 0.5})
    text = summary_csv(rows)
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert tuple(parsed[0]) == CSV_COLUMNS
    assert parsed[0] == {"setting": "ood/true", "param": "5.0", "K": "5", "seed": "0",
                         "macro_f1": "0.900000", "bacc": "0.910000"}
    assert parsed[-1]["param"] == "" and parsed[-1]["macro_f1"] == "1.000000"
