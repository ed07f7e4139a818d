import math

import numpy as np
import pytest

from tagcbm.ccgp import (
    PairBatch,
    PretrainConfig,
    PretrainDomain,
    PretrainInstance,
    build_instances,
    info_nce,
    info_nce_loss,
    pretrain,
    sample_pairs,
)
from tagcbm.embed import EmbeddingTable
from tagcbm.graphcore import EgoNetwork, TextAttributedGraph
from tagcbm.nn import GradientTape, finite_difference_check


def fake_instance(i, n_views, n_concepts):
    ego = EgoNetwork(i, frozenset({i}), frozenset(), 0)
    return PretrainInstance(i, ego, (ego,) * n_views, tuple(f"c{i}_{j}" for j in range(n_concepts)))


def brute_force(Z, C, tau):
    """Per-pair -log(exp(sim_pp/tau) / sum_q exp(sim_pq/tau)), averaged, with plain loops."""
    P = Z.shape[0]
    total = 0.0
    for p in range(P):
        zn = Z[p] / math.sqrt(sum(x * x for x in Z[p]))
        sims = []
        for q in range(P):
            cn = C[q] / math.sqrt(sum(x * x for x in C[q]))
            sims.append(sum(a * b for a, b in zip(zn, cn)))
        denom = sum(math.exp(s / tau) for s in sims)
        total += -math.log(math.exp(sims[p] / tau) / denom)
    return total / P


def batch_from(Z, C):
    P = Z.shape[0]
    return PairBatch(np.column_stack([np.arange(P), np.zeros(P, int), np.zeros(P, int)]),
                     graph_emb=np.asarray(Z, float), concept_emb=np.asarray(C, float))


def test_instance_invariants():
    ego = EgoNetwork(0, frozenset({0}), frozenset())
    with pytest.raises(ValueError):
        PretrainInstance(0, ego, (), ("a",))
    with pytest.raises(ValueError):
        PretrainInstance(0, ego, (ego,), ())


def test_sample_pairs_singleton():
    b = sample_pairs([fake_instance(0, 1, 1)], 1, 1, batch_size=4, seed=0)
    assert len(b) == 1 and b.pairs.tolist() == [[0, 0, 0]]


def test_sample_pairs_cartesian_count():
    b = sample_pairs([fake_instance(0, 4, 5)], 2, 3, batch_size=100, seed=1)
    assert len(b) == 6
    ms, ks = b.subsets[0]
    assert {(m, j) for _, m, j in b.pairs.tolist()} == {(m, j) for m in ms for j in ks}


def test_sample_pairs_membership_oracle():
    instances = [fake_instance(i, 10, 6) for i in range(5)]
    seed = 42
    b = sample_pairs(instances, 2, 2, batch_size=20, seed=seed)
    assert len(b) == 20
    # replay the seeded draws independently
    rng = np.random.default_rng(seed)
    expected = {}
    for i in rng.permutation(5):
        ms = set(rng.choice(10, size=2, replace=False).tolist())
        ks = set(rng.choice(6, size=2, replace=False).tolist())
        expected[int(i)] = (ms, ks)
    for i, m, j in b.pairs.tolist():
        assert m in expected[i][0] and j in expected[i][1]
    assert {i for i, _, _ in b.pairs.tolist()} == set(range(5))


def test_sample_pairs_truncates_first_only():
    b = sample_pairs([fake_instance(0, 5, 5), fake_instance(1, 5, 5)], 3, 3, batch_size=4, seed=0)
    assert len(b) == 4 and len(set(b.instance_ids.tolist())) == 1
    b = sample_pairs([fake_instance(i, 2, 2) for i in range(3)], 2, 2, batch_size=10, seed=0)
    assert len(b) == 8  # a third instance would overflow, so it is skipped


def test_sample_pairs_errors():
    with pytest.raises(ValueError):
        sample_pairs([], 1, 1)
    with pytest.raises(ValueError):
        sample_pairs([fake_instance(0, 1, 1)], batch_size=0)


def test_info_nce_examples():
    rng = np.random.default_rng(0)
    loss, grad = info_nce(batch_from(rng.standard_normal((1, 4)), rng.standard_normal((1, 4))))
    assert loss == pytest.approx(0.0, abs=1e-15) and grad.shape == (1, 4)
    # identical concepts: every similarity ties, loss = ln N
    z = rng.standard_normal((5, 3))
    loss, _ = info_nce(batch_from(z, np.tile([1.0, 0.0, 0.0], (5, 1))), tau=0.3)
    assert loss == pytest.approx(math.log(5), abs=1e-12)
    # sims (1, 0) for pair 1 and (0, 1) for pair 2 at tau = 1
    loss, _ = info_nce(batch_from(np.eye(2), np.eye(2)), tau=1.0)
    assert loss == pytest.approx(math.log1p(math.exp(-1)), abs=1e-12)
    assert math.log1p(math.exp(-1)) == pytest.approx(0.31326, abs=1e-5)


@pytest.mark.parametrize("tau", [0.0, -1.0])
def test_info_nce_rejects_temperature(tau):
    with pytest.raises(ValueError):
        info_nce(batch_from(np.eye(2), np.eye(2)), tau=tau)
    with pytest.raises(ValueError):
        info_nce_loss(np.eye(2), np.eye(2), tau)


def test_info_nce_needs_embeddings():
    with pytest.raises(ValueError):
        info_nce(PairBatch(np.zeros((1, 3), int)))


def test_info_nce_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(50):
        P = int(rng.integers(1, 9))
        Z, C = rng.standard_normal((P, 6)), rng.standard_normal((P, 6))
        tau = float(rng.uniform(0.05, 2.0))
        loss, _ = info_nce(batch_from(Z, C), tau)
        assert loss >= 0
        assert abs(loss - brute_force(Z, C, tau)) <= 1e-10


def test_info_nce_gradient():
    rng = np.random.default_rng(2)
    Z, C = rng.standard_normal((6, 5)), rng.standard_normal((6, 5))
    _, grad = info_nce(batch_from(Z, C), 0.5)
    err = finite_difference_check(lambda ps: info_nce(batch_from(ps[0], C), 0.5)[0], [Z], [grad], probes=20)
    assert err <= 1e-4


def test_temperature_sharpens_gap():
    dominant = np.array([[1.0, 0.0], [0.0, 1.0]])
    uniform = np.ones((2, 2))

    def gap(tau):
        a = info_nce(batch_from(uniform, dominant), tau)[0]
        b = info_nce(batch_from(dominant, dominant), tau)[0]
        return a - b

    assert gap(0.07) > gap(1.0) > 0


def test_exclude_positives_masks_same_instance():
    Z = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    C = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    ids = np.array([0, 0, 1])
    plain = float(info_nce_loss(Z, C, 1.0, ids).value)
    masked = float(info_nce_loss(Z, C, 1.0, ids, exclude_positives=True).value)
    assert masked < plain
    with pytest.raises(ValueError):
        info_nce_loss(Z, C, 1.0, None, exclude_positives=True)


def toy_domain(classes=16, dim=32, seed=0):
    """One node per class on a ring; each node's only concept is its class anchor."""
    rng = np.random.default_rng(seed)
    anchors = np.linalg.qr(rng.standard_normal((dim, classes)))[0].T
    entries = {f"anchor{i}": anchors[i] for i in range(classes)}
    entries.update({f"node{i}": anchors[i] + 0.3 * rng.standard_normal(dim) / math.sqrt(dim)
                    for i in range(classes)})
    table = EmbeddingTable(dim, entries)
    edges = [(i, (i + 1) % classes) for i in range(classes)]
    g = TextAttributedGraph.build([f"node{i}" for i in range(classes)], edges)
    inst = build_instances(g, range(classes), [[f"anchor{i}"] for i in range(classes)], k=1, views=4, seed=seed)
    return PretrainDomain(g, inst, "toy"), table


def test_pretrain_halves_loss():
    domain, table = toy_domain()
    cfg = PretrainConfig(steps=200, lr=1e-2, views_per_instance=1, concepts_per_instance=1, batch_size=16,
                         hidden=32, hops=1, seed=0)
    res = pretrain([domain], table, cfg)
    assert len(res.losses) == 200
    start, end = np.mean(res.losses[:5]), np.mean(res.losses[-5:])
    assert end <= 0.5 * start


def test_pretrain_deterministic_and_validates():
    domain, table = toy_domain(classes=6, dim=8)
    cfg = PretrainConfig(steps=5, batch_size=8, hidden=8, hops=1)
    a, b = pretrain([domain], table, cfg), pretrain([domain], table, cfg)
    assert a.losses == b.losses
    assert all(np.array_equal(x, y) for x, y in zip(a.params.arrays(), b.params.arrays()))
    with pytest.raises(ValueError):
        pretrain([PretrainDomain(domain.graph, [])], table, cfg)


def test_multi_domain_pool():
    d1, table = toy_domain(classes=4, dim=8, seed=0)
    res = pretrain([d1, d1], table, PretrainConfig(steps=3, batch_size=8, hidden=8, hops=1))
    assert len(res.losses) == 3 and np.isfinite(res.losses).all()


def test_gradient_through_encoder_matches_fd():
    domain, table = toy_domain(classes=5, dim=6)
    from tagcbm.nn.layers import GcnEncoderParams, ego_batch, gcn_forward, readout
    params = GcnEncoderParams.init(6, 6, seed=1, hidden=4)
    egos = [inst.views[0] for inst in domain.instances]
    eb = ego_batch(egos)
    X = domain.features(table)[eb.node_ids]
    C = table.matrix([inst.concepts[0] for inst in domain.instances])

    def f(arrays):
        z = readout(gcn_forward(eb.adj, X, params.with_arrays(arrays)), eb, "center")
        return float(info_nce_loss(z, C, 0.5).value)

    with GradientTape() as tape:
        p = params.watch(tape)
        loss = info_nce_loss(readout(gcn_forward(eb.adj, X, p), eb, "center"), C, 0.5)
    grads = tape.gradient(loss, p.arrays())
    assert finite_difference_check(f, params.arrays(), grads, probes=25, seed=3) <= 1e-4
