import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tagcbm.embed import ConceptSet, EmbeddingTable
from tagcbm.graphcore import TextAttributedGraph
from tagcbm.nn import MlpClassifierParams
from tagcbm.nn.layers import GcnEncoderParams
from tagcbm.predictor import (
    ExplanationReport,
    PredictorConfig,
    display_weights,
    explain,
    explain_activations,
    predict,
    predict_from_activations,
    report_from_svg,
    train_predictor,
    wordcloud_svg,
)


def zero_clf(m, c):
    return MlpClassifierParams([np.zeros((m, 4)), np.zeros((4, c))], [np.zeros(4), np.zeros(c)])


def test_zero_classifier_uniform():
    _, probs = predict_from_activations(np.array([[0.3, -0.4, 0.9]]), zero_clf(3, 4))
    np.testing.assert_allclose(probs, 0.25, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_probabilities_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    clf = MlpClassifierParams.init(5, 3, (7,), seed=seed)
    clf = clf.with_arrays([a * 10 for a in clf.arrays()])
    _, probs = predict_from_activations(rng.uniform(-1, 1, (4, 5)), clf)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_hand_set_classifier_logits():
    W = np.array([[2.0, -1.0], [0.5, 3.0]])
    b = np.array([0.0, 0.2])
    clf = MlpClassifierParams([W], [b])
    a = np.array([0.9, -0.1])
    logits = np.array([0.9 * 2.0 - 0.1 * 0.5, 0.9 * -1.0 - 0.1 * 3.0 + 0.2])
    cls, probs = predict_from_activations(a, clf)
    e = np.exp(logits - logits.max())
    np.testing.assert_allclose(probs, e / e.sum(), atol=1e-15)
    assert cls == 0


def test_display_weights():
    np.testing.assert_array_equal(display_weights([0.4, 0.4, 0.4]), [1.0, 1.0, 1.0])
    np.testing.assert_array_equal(display_weights([0.7]), [1.0])
    np.testing.assert_allclose(display_weights([0.0, 0.5, 1.0, -1.0]), [0.5, 0.75, 1.0, 0.0])


def test_explanation_ranking_sort_oracle():
    rng = np.random.default_rng(2)
    cs = ConceptSet(tuple(f"c{j}" for j in range(8)))
    for _ in range(20):
        a = np.round(rng.uniform(-1, 1, 8), 1)  # rounding forces ties
        rep = explain_activations(3, a, cs, zero_clf(8, 2))
        oracle = sorted(range(8), key=lambda j: (-a[j], j))
        assert [c.text for c in rep.concepts] == [f"c{j}" for j in oracle]
        assert [c.activation for c in rep.concepts] == [float(a[j]) for j in oracle]


def test_explanation_equal_activations():
    rep = explain_activations(0, [0.2, 0.2], ConceptSet(("a", "b")), zero_clf(2, 2))
    assert [c.display_weight for c in rep.concepts] == [1.0, 1.0]
    assert rep.probabilities == [0.5, 0.5]


def test_svg_round_trip():
    rep = explain_activations(5, [0.9, -0.3, 0.1], ConceptSet(("graph <theory>", "a--b", "x & y")),
                              zero_clf(3, 2))
    svg = wordcloud_svg(rep)
    assert svg.startswith("<svg") and svg.count("<text ") == 3
    assert "&lt;theory&gt;" in svg
    assert report_from_svg(svg) == rep
    assert ExplanationReport.from_json(rep.to_json()) == rep
    with pytest.raises(ValueError):
        report_from_svg("<svg></svg>")


def separable(seed=0, n=30):
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1, 2], n // 3)
    A = rng.uniform(-0.1, 0.1, (n, 3))
    A[np.arange(n), y] += 0.8
    return A, y


def test_train_predictor_fits_and_is_deterministic():
    A, y = separable()
    Av, yv = separable(1)
    cfg = PredictorConfig(hidden=(8,), lr=5e-2, max_epochs=200, patience=30, seed=0)
    a = train_predictor(A, y, Av, yv, cfg)
    b = train_predictor(A, y, Av, yv, cfg)
    assert a.best_val_f1 == 1.0
    assert a.best_epoch == b.best_epoch and a.history == b.history
    pred, _ = predict_from_activations(Av, a.classifier)
    assert (pred == yv).all()


def test_early_stopping_bounds_epochs():
    A, y = separable()
    Av, yv = separable(1)
    yv[:3] = (yv[:3] + 1) % 3  # noisy validation labels make the validation loss turn upward
    res = train_predictor(A, y, Av, yv, PredictorConfig(lr=5e-2, max_epochs=500, patience=5))
    assert len(res.history) < 500
    assert len(res.history) - 1 - res.best_epoch <= 5


def test_train_predictor_errors():
    A, y = separable()
    with pytest.raises(ValueError):
        train_predictor(A[:, :0], y, A[:, :0], y)
    with pytest.raises(ValueError):
        train_predictor(A, y, A[:0], y[:0])


def test_predict_and_explain_on_graph():
    g = TextAttributedGraph.build(["t0", "t1", "t2"], [(0, 1), (1, 2)])
    table = EmbeddingTable(3, {"t0": [1, 0, 0], "t1": [0, 1, 0], "t2": [0, 0, 1], "a": [1, 1, 0], "b": [0, 1, 1]})
    enc = GcnEncoderParams.init(3, 3, seed=0, hidden=4)
    cs = ConceptSet(("a", "b"))
    clf = MlpClassifierParams.init(2, 2, (4,), seed=0)
    cls, probs, act = predict(g, 1, enc, cs, table, clf, k=1)
    assert probs.shape == (2,) and act.shape == (2,) and cls == int(probs.argmax())
    rep = explain(g, 1, enc, cs, table, clf, k=1)
    assert rep.instance_id == 1 and sorted(c.activation for c in rep.concepts) == sorted(act.tolist())
    # rescaling concept vectors leaves activations untouched
    scaled = EmbeddingTable(3, {**{k: v * 7 for k, v in table.entries.items()}})
    _, _, act2 = predict(g, 1, enc, cs, scaled, clf, k=1)
    np.testing.assert_allclose(act, act2, atol=1e-14)
