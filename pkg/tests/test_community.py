import xml.etree.ElementTree as ET
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmufault.community import (Community, CorrelationMatrix, column_correlations,
                                community_graph, extract_communities, feeder_order,
                                greedy_placement, heatmap_svg, in_same_community, phase_view,
                                placement_quality, score_blocks, spans_disconnected_region,
                                threshold_adjacency, write_communities_csv)
from pmufault.matrices import make_placement, partition


def _random_matrix(seed, rows=6, cols=9):
    r = np.random.default_rng(seed)
    return r.standard_normal((rows, cols)) + 1j * r.standard_normal((rows, cols))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_correlation_matrix_properties(seed):
    C = column_correlations(_random_matrix(seed)).C
    np.testing.assert_array_equal(C, C.T)
    np.testing.assert_array_equal(np.diag(C), 1.0)
    assert C.min() >= 0.0 and C.max() <= 1.0


def test_identical_and_orthogonal_columns():
    X = np.array([[1, 1, 0], [1j, 1j, 0], [0, 0, 2]], dtype=complex)
    C = column_correlations(X).C
    assert C[0, 1] == 1.0 and C[0, 2] == 0.0


@pytest.mark.parametrize("tau", [0.3, 0.814, 0.99, 1.0])
def test_scaled_duplicates_always_join(tau):
    X = _random_matrix(3)
    X[:, 4] = (2 - 3j) * X[:, 1]
    g = threshold_adjacency(column_correlations(X), tau)
    assert g.same_community(1, 4)


def test_tau_one_joins_only_duplicates():
    X = _random_matrix(4)
    X[:, 2] = -1j * X[:, 0]
    g = threshold_adjacency(column_correlations(X), 1.0)
    assert g.communities[0] == [0, 2]
    assert all(len(c) == 1 for c in g.communities[1:])


def test_tiny_tau_gives_one_community():
    g = threshold_adjacency(column_correlations(_random_matrix(5)), 1e-9)
    assert len(g.communities) == 1


@pytest.mark.parametrize("tau", [0.0, -0.1, np.nextafter(1.0, 2.0)])
def test_tau_out_of_range(tau):
    with pytest.raises(ValueError):
        threshold_adjacency(column_correlations(_random_matrix(1)), tau)


def test_zero_column_is_unlocatable():
    X = _random_matrix(6)
    X[:, 3] = 0
    corr = column_correlations(X)
    assert corr.zero_columns == [3]
    assert corr.C[3, 3] == 1.0 and corr.C[3].sum() == 1.0
    g = threshold_adjacency(corr, 0.01)
    assert g.community_of(3) == [3] and g.unlocatable == [3]


def test_phase_filter():
    X = _random_matrix(7, cols=4)
    X[:, 1] = X[:, 0]
    corr = column_correlations(X, ["A", "B", "A", "B"])
    assert corr.C[0, 1] == 0.0
    assert corr.phase_blocks == {"A": [0, 2], "B": [1, 3]}


def test_components_from_adjacency():
    empty = CorrelationMatrix(np.eye(4))
    assert [len(c) for c in threshold_adjacency(empty, 0.5).communities] == [1, 1, 1, 1]
    C = np.eye(4)
    C[0, 1] = C[1, 0] = C[1, 2] = C[2, 1] = 0.9
    g = threshold_adjacency(CorrelationMatrix(C), 0.5)
    assert g.communities == [[0, 1, 2], [3]]
    assert g.A[0, 2] == 0 and g.A.diagonal().sum() == 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_monotone_refinement(seed):
    corr = column_correlations(_random_matrix(seed, rows=3, cols=12))
    taus = [0.2, 0.4, 0.6, 0.8, 0.95, 1.0]
    graphs = [threshold_adjacency(corr, t) for t in taus]
    for coarse, fine in zip(graphs, graphs[1:]):
        for comm in fine.communities:
            assert len({int(coarse.labels[i]) for i in comm}) == 1


def test_fork_raw_columns_one_community(fork):
    _, blocks = fork.blocks(["1", "2"])
    corr, g = community_graph(blocks, fork.imap, 0.999, kind="raw")
    assert corr.C[1, 2] == 1.0 and corr.C[1, 3] == 1.0
    assert g.same_community(1, 3)


def test_ieee34_communities(feeder34, good_placement):
    _, blocks = feeder34.blocks(good_placement)
    _, g = community_graph(blocks, feeder34.imap, 0.814)
    imap = feeder34.imap
    for a, b in combinations(["860", "836", "840", "862"], 2):
        assert in_same_community(g, imap, a, b, "ABC")
    assert in_same_community(g, imap, "814", "822", "A")
    assert not in_same_community(g, imap, "836", "800", "A")
    comms = extract_communities(g, imap)
    assert sum(len(c.members) for c in comms) == imap.M
    first = [min(imap.entries.index(m) for m in c.members) for c in comms]
    assert first == sorted(first)


def test_bad_placement_larger_communities(feeder34, good_placement, bad_placement):
    m, adm, imp, imap = feeder34.model, feeder34.adm, feeder34.imp, feeder34.imap
    good = placement_quality(m, make_placement(imap, good_placement), adm=adm, imp=imp)
    bad = placement_quality(m, make_placement(imap, bad_placement), adm=adm, imp=imp)
    assert good.rank_Yau == good.K == 15
    assert bad.condition_Yau > good.condition_Yau
    assert bad.max_community_size["A"] > good.max_community_size["A"]
    assert all(bad.max_community_size[p] >= good.max_community_size[p] for p in "ABC")
    assert bad.unlocatable > 0 and bad.adjacent_sensors


def test_adjacent_sensors_flagged(chain):
    s = placement_quality(chain.model, make_placement(chain.imap, ["2", "3"]))
    assert s.adjacent_sensors
    assert "adjacent" in s.summary()
    s = placement_quality(chain.model, make_placement(chain.imap, ["2", "4"]))
    assert not s.adjacent_sensors


def test_full_placement_all_singletons(chain):
    pl = greedy_placement(chain.model, 6, adm=chain.adm, imp=chain.imp)
    assert sorted(pl.monitored) == sorted(chain.model.bus_ids)
    score = score_blocks(partition(chain.adm, chain.imp, pl), chain.imap, pl.monitored)
    assert score.overall_max_community == 1
    with pytest.raises(ValueError):
        placement_quality(chain.model, pl)


def test_greedy_matches_exhaustive_on_chain(chain):
    pl = greedy_placement(chain.model, 2, adm=chain.adm, imp=chain.imp)
    scores = {}
    for other in chain.model.bus_ids[1:]:
        p = make_placement(chain.imap, ["1", other])
        s = placement_quality(chain.model, p, adm=chain.adm, imp=chain.imp)
        scores[other] = (s.overall_max_community, s.condition_Yau, s.adjacent_sensors)
    best = min(scores, key=lambda b: scores[b][:2])
    assert pl.monitored == ("1", best)
    # a non-adjacent option beats putting the second sensor next to the source
    assert scores[best][:2] < scores["2"][:2] and not scores[best][2]


def test_greedy_ieee34_beats_bad_placement(feeder34, bad_placement):
    m, adm, imp, imap = feeder34.model, feeder34.adm, feeder34.imp, feeder34.imap
    pl = greedy_placement(m, 5, adm=adm, imp=imp)
    assert pl.monitored[:2] == ("800", "848")
    g = placement_quality(m, pl, adm=adm, imp=imp)
    b = placement_quality(m, make_placement(imap, bad_placement), adm=adm, imp=imp)
    assert g.overall_max_community <= b.overall_max_community


def test_greedy_warns_when_sources_uncovered(feeder34):
    with pytest.warns(UserWarning, match="source"):
        pl = greedy_placement(feeder34.model, 1, adm=feeder34.adm, imp=feeder34.imp)
    assert pl.monitored == ("800",)
    with pytest.raises(ValueError):
        greedy_placement(feeder34.model, 0)


def test_feeder_order_is_depth_first(feeder34):
    order = feeder_order(feeder34.model)
    assert order[0] == "800" and sorted(order) == sorted(feeder34.model.bus_ids)
    g = feeder34.model.graph()
    # every bus after the root hangs off a bus already visited
    seen = {order[0]}
    for b in order[1:]:
        assert any(n in seen for n in g.neighbors(b))
        seen.add(b)


def test_phase_view_and_svg(feeder34, good_placement):
    _, blocks = feeder34.blocks(good_placement)
    corr, _ = community_graph(blocks, feeder34.imap, 0.814)
    labels, C = phase_view(corr, feeder34.imap, "A", feeder_order(feeder34.model))
    assert len(labels) == 30 and labels[0] == "800"
    root = ET.fromstring(heatmap_svg(labels, C, "phase A", tau=0.814))
    rects = [e for e in root if e.tag.endswith("rect")]
    assert len(rects) == 30 * 30


def test_communities_csv(tmp_path):
    p = tmp_path / "c.csv"
    write_communities_csv(p, [Community(0, (("800", "A"), ("802", "A"))),
                              Community(1, (("810", "B"),))])
    assert p.read_text() == "community_id,bus,phase\n0,800,A\n0,802,A\n1,810,B\n"


def test_disconnected_region_report(chain):
    assert not spans_disconnected_region(chain.model, Community(0, (("2", "A"), ("3", "A"))))
    assert spans_disconnected_region(chain.model, Community(0, (("2", "A"), ("4", "A"))))
