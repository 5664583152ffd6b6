from math import comb

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pgcs import graph_models as gm
from pgcs.graph_core import all_pairs


def test_ppm_expected_edge_count_oracle():
    cfg = gm.ppm()
    ref = 5 * comb(20, 2) * 0.9 + 0.01 * (comb(100, 2) - 5 * comb(20, 2))
    assert ref == pytest.approx(895)
    assert gm.expected_edge_count(cfg) == pytest.approx(ref)
    er = gm.GraphFamilyConfig("ER", n=100, p=895 / 4950)
    assert gm.expected_edge_count(er) == pytest.approx(895)


def test_ppm_mean_edge_count_over_seeds():
    counts = [len(gm.generate(gm.ppm(seed=s)).graph) for s in range(200)]
    intra = 5 * comb(20, 2)
    sd = np.sqrt(intra * 0.9 * 0.1 + (4950 - intra) * 0.01 * 0.99)
    assert sd == pytest.approx(11.1, abs=0.1)
    # 3 sigma band on the mean of 200 draws
    assert abs(np.mean(counts) - 895) <= 3 * sd / np.sqrt(200)


def test_karate_matches_networkx():
    g = gm.generate(gm.GraphFamilyConfig("KARATE")).graph
    ref = {tuple(sorted(e)) for e in nx.karate_club_graph().edges()}
    assert g.n == 34
    assert g.edges == ref
    assert len(g) == 78
    clubs = nx.get_node_attributes(nx.karate_club_graph(), "club")
    labels = [0 if clubs[i] == "Mr. Hi" else 1 for i in range(34)]
    assert list(gm.KARATE_CLUBS) == labels or list(1 - np.array(gm.KARATE_CLUBS)) == labels


def test_rgg_edges_match_stored_coordinates():
    gen = gm.generate(gm.GraphFamilyConfig("RGG", n=60, radius=0.27), 4)
    pts = gen.coords
    for i, j in all_pairs(60):
        inside = np.linalg.norm(pts[i] - pts[j]) <= 0.27
        assert ((i, j) in gen.graph.edges) == inside


def test_ba_heavy_tail_sanity():
    for seed in range(5):
        deg = gm.generate(gm.GraphFamilyConfig("BA", n=100, attach=10), seed).graph.degrees()
        assert deg.max() > np.median(deg)
        assert deg.min() >= 1 and deg[10:].min() >= 10


@pytest.mark.parametrize("family,count", [("ER", 2), ("RGG", 2), ("PPM", 4), ("SBM", 4),
                                          ("KARATE", 4), ("BA", 6)])
def test_category_counts(family, count):
    assert len(gm.category_names(family)) == count


def test_generation_is_deterministic():
    a = gm.generate(gm.ppm(seed=3)).graph
    b = gm.generate(gm.ppm(seed=3)).graph
    c = gm.generate(gm.ppm(seed=4)).graph
    assert a == b and a != c


def test_invalid_configs():
    bad = [dict(family="PPM", p=1.5), dict(family="RGG", radius=2.0),
           dict(family="BA", n=10, attach=10), dict(family="XYZ"), dict(family="SBM")]
    for kw in bad:
        with pytest.raises(ValueError):
            gm.GraphFamilyConfig(**kw)


def test_config_round_trip():
    cfg = gm.GraphFamilyConfig("SBM", sizes=(10, 15), p=0.5, q=0.05, seed=9)
    assert gm.GraphFamilyConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.n == 25


def test_prior_set_balanced_er_and_ppm():
    er = gm.generate(gm.GraphFamilyConfig("ER", n=100, p=895 / 4950), 0)
    c = gm.sample_prior_set(er, 100, 1).counts()
    assert abs(c["present"] - 50) <= 1 and abs(c["absent"] - 50) <= 1
    ppm = gm.generate(gm.ppm(), 0)
    prior = gm.sample_prior_set(ppm, 100, 1)
    assert all(abs(v - 25) <= 1 for v in prior.counts().values())
    assert len(set(prior.pairs)) == 100
    for p, cat in zip(prior.pairs, prior.categories):
        assert ppm.category(p) == cat


def test_prior_set_redistributes_deficits():
    # PPM with q=0: no present inter-cluster pairs to draw from
    gen = gm.generate(gm.GraphFamilyConfig("PPM", communities=2, community_size=5, p=1.0, q=0.0))
    avail = {c: 0 for c in gm.category_names("PPM")}
    for pair in all_pairs(10):
        avail[gen.category(pair)] += 1
    prior = gm.sample_prior_set(gen, 40, 0)
    counts = prior.counts()
    assert counts["present-inter"] == 0
    assert sum(counts.values()) == 40
    for c, v in counts.items():
        assert v <= avail[c]


def test_prior_set_exhaustive_and_errors():
    gen = gm.generate(gm.GraphFamilyConfig("ER", n=8, p=0.4), 0)
    prior = gm.sample_prior_set(gen, comb(8, 2), 0)
    assert set(prior.pairs) == set(all_pairs(8))
    with pytest.raises(ValueError):
        gm.sample_prior_set(gen, comb(8, 2) + 1, 0)


@given(st.integers(0, 30), st.integers(0, 10 ** 6))
@settings(max_examples=30, deadline=None)
def test_perturbation_draws(d, seed):
    gen = gm.generate(gm.GraphFamilyConfig("ER", n=12, p=0.3), 0)
    prior = gm.sample_prior_set(gen, 30, 0)
    w = gm.sample_perturbation(prior, d, seed)
    assert len(w) == d == len(set(w))
    assert set(w) <= set(prior.pairs)
    assert w == gm.sample_perturbation(prior, d, seed)
    if d == 30:
        assert set(w) == set(prior.pairs)


def test_perturbation_too_many():
    gen = gm.generate(gm.GraphFamilyConfig("ER", n=12, p=0.3), 0)
    prior = gm.sample_prior_set(gen, 5, 0)
    with pytest.raises(ValueError):
        gm.sample_perturbation(prior, 6)
    assert gm.sample_perturbation(prior, 0) == ()
