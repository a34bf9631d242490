import logging
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import known_sets
from grnlfa.temporal_graph import (
    EdgeFormat,
    EdgeParseError,
    NetworkConfigError,
    NodeIndex,
    Snapshot,
    SparseKnownSet,
    TemporalEdge,
    TemporalNetwork,
    aggregation_weights,
    bin_timestamps,
    build_network,
    combine_known_sets,
    dumps_network,
    loads_network,
    parse_edge_stream,
    read_edge_file,
    temporal_split,
    write_edge_file,
)


def edges_at(timestamps, value=1.0):
    return [TemporalEdge(f"a{n}", f"b{n}", ts, value) for n, ts in enumerate(timestamps)]


def network_from(slices, shape):
    """Network from per-slice ``{(i, j): r}`` dicts."""
    snaps = []
    for t, d in enumerate(slices, start=1):
        keys = list(d)
        snaps.append(Snapshot(t, SparseKnownSet([k[0] for k in keys], [k[1] for k in keys],
                                                [d[k] for k in keys], shape)))
    return TemporalNetwork(tuple(snaps), NodeIndex.dense(*shape))


# --------------------------------------------------------------------------- parsing


def test_parse_single_record():
    assert parse_edge_stream(["a,b,100,5.0"]) == [TemporalEdge("a", "b", 100, 5.0)]


def test_parse_negative_value_reports_line_one():
    with pytest.raises(EdgeParseError) as exc:
        parse_edge_stream(["a,b,100,-1.0"])
    assert exc.value.errors[0][0] == 1
    assert "negative" in exc.value.errors[0][1]


def test_parse_collects_every_bad_line():
    lines = ["sender,receiver,timestamp,value", "a,b,x,1", "# note", "a,b,1,1", "a,b,2,oops", "a,b,3"]
    with pytest.raises(EdgeParseError) as exc:
        parse_edge_stream(lines)
    assert [n for n, _ in exc.value.errors] == [2, 5, 6]


def test_parse_empty_input_is_empty_list():
    assert parse_edge_stream([]) == []
    assert parse_edge_stream(["", "# only a comment"]) == []


def test_parse_header_modes_and_tab():
    assert len(parse_edge_stream(["sender,receiver,timestamp,value", "a,b,1,2"])) == 1
    assert len(parse_edge_stream(["x,y,1,2", "a,b,1,2"], EdgeFormat(header=True))) == 1
    with pytest.raises(EdgeParseError):
        parse_edge_stream(["sender,receiver,timestamp,value"], EdgeFormat(header=False))
    assert parse_edge_stream(["a\tb\t7\t0.5"], EdgeFormat("\t")) == [TemporalEdge("a", "b", 7, 0.5)]


def test_parse_slice_column():
    edges = parse_edge_stream(["a,b,10,1.0,2"], EdgeFormat(slice_column=True))
    assert edges[0].slice == 2
    with pytest.raises(EdgeParseError):
        parse_edge_stream(["a,b,10,1.0,0"], EdgeFormat(slice_column=True))


def test_duplicates_merge_by_sum_in_build():
    edges = parse_edge_stream(["a,b,100,1.0", "a,b,100,2.0", "c,d,200,1.0", "c,d,300,1.0"])
    net = build_network(edges, 3, transform="identity")
    first = net.snapshot(1).known
    assert first.nnz == 1 and first.vals[0] == 3.0


def test_transform_applies_after_merging():
    edges = parse_edge_stream(["a,b,0,1.0", "a,b,0,2.0", "c,d,5,1.0", "c,d,10,1.0"])
    net = build_network(edges, 3)
    assert net.snapshot(1).known.vals[0] == pytest.approx(math.log1p(3.0), rel=0, abs=0)


def test_edge_file_round_trip(tmp_path):
    edges = [TemporalEdge("a", "b", 1, 0.1, 1), TemporalEdge("c", "b", 5, 2.5, 3)]
    path = tmp_path / "e.tsv"
    write_edge_file(edges, path, "\t")
    assert read_edge_file(path, EdgeFormat("\t", None, True)) == edges


# --------------------------------------------------------------------------- binning and building


def test_binning_example():
    net = build_network(edges_at([0, 10, 20, 30]), 3, transform="identity")
    counts = [s.known.nnz for s in net.snapshots]
    assert counts == [2, 1, 1]
    assert oracles.bin_slices([0, 10, 20, 30], 3) == [1, 1, 2, 3]


@given(st.lists(st.integers(-10**6, 10**6), min_size=2, max_size=40), st.integers(3, 12))
def test_binning_matches_exact_oracle_and_partitions(ts, T):
    if min(ts) == max(ts):
        ts = ts + [min(ts) + 1]
    got = bin_timestamps(np.array(ts), T)
    assert got.tolist() == oracles.bin_slices(ts, T)
    assert got.min() >= 1 and got.max() <= T


def test_single_edge_explicit_slice():
    net = build_network([TemporalEdge("a", "b", 0, 2.0, 1)], 3, explicit_slices=True, transform="identity")
    assert [s.known.nnz for s in net.snapshots] == [1, 0, 0]
    assert net.empty_slices() == [2, 3]


def test_empty_slices_are_reported(caplog):
    with caplog.at_level(logging.WARNING, logger="grnlfa.temporal_graph"):
        build_network(edges_at([0, 1, 100]), 4)
    assert "empty slices" in caplog.text


def test_zero_value_is_retained_after_log1p():
    net = build_network([TemporalEdge("a", "b", 0, 0.0), TemporalEdge("a", "c", 5, 1.0),
                         TemporalEdge("a", "c", 10, 1.0)], 3)
    first = net.snapshot(1).known
    assert first.nnz == 1 and first.vals[0] == 0.0


def test_build_errors():
    with pytest.raises(NetworkConfigError):
        build_network(edges_at([0, 1, 2]), 2)
    with pytest.raises(NetworkConfigError):
        build_network(edges_at([7, 7, 7]), 3)
    with pytest.raises(NetworkConfigError):
        build_network(edges_at([0, 1]), 3, transform="sqrt")
    with pytest.raises(NetworkConfigError):
        build_network(edges_at([0, 1]), None)


def test_node_index_is_global_and_dense():
    edges = [TemporalEdge("a", "x", 0, 1.0), TemporalEdge("b", "y", 10, 1.0), TemporalEdge("a", "y", 20, 1.0)]
    net = build_network(edges, 3)
    assert net.index.sender_map == {"a": 0, "b": 1}
    assert net.index.receiver_map == {"x": 0, "y": 1}
    assert all(s.known.shape == (2, 2) for s in net.snapshots)


# --------------------------------------------------------------------------- known sets


@given(known_sets())
def test_row_and_column_slices_visit_the_same_entries(data):
    rows, cols, vals, shape = data
    ks = SparseKnownSet(rows, cols, vals, shape)
    by_row = sorted((i, int(j), float(r)) for i in range(shape[0]) for j, r in zip(*ks.row_slice(i)))
    by_col = sorted((int(i), j, float(r)) for j in range(shape[1]) for i, r in zip(*ks.col_slice(j)))
    assert by_row == by_col
    assert ks.row_counts.sum() == ks.col_counts.sum() == ks.nnz
    merged = oracles.entries_dict(rows, cols, vals)
    assert ks.nnz == len(merged)
    for (i, j), r in merged.items():
        assert dict(zip(ks.row_slice(i)[0].tolist(), ks.row_slice(i)[1].tolist()))[j] == pytest.approx(r)


def test_known_set_rejects_bad_input():
    with pytest.raises(ValueError):
        SparseKnownSet([0], [0], [-1.0], (1, 1))
    with pytest.raises(IndexError):
        SparseKnownSet([1], [0], [1.0], (1, 1))
    with pytest.raises(ValueError):
        SparseKnownSet([0], [0], [float("nan")], (1, 1))


# --------------------------------------------------------------------------- splitting


def test_split_T3_single_training_slice():
    net = network_from([{(0, 0): 2.0, (1, 1): 1.5}, {(0, 1): 1.0}, {(1, 0): 1.0}], (2, 2))
    for theta in (0.1, 0.5, 1.0):
        split = temporal_split(net, theta)
        assert split.train_target == net.snapshot(1).known
        assert split.validation_slice.t == 2 and split.test_slice.t == 3


def test_split_T4_decay_example():
    net = network_from([{(0, 0): 2.0}, {(0, 0): 4.0}, {(0, 0): 1.0}, {(0, 0): 1.0}], (1, 1))
    split = temporal_split(net, 0.5)
    assert split.train_target.vals.tolist() == [5.0]
    assert [s.t for s in split.train_slices] == [1, 2]


def test_split_theta_one_is_plain_sum():
    net = network_from([{(0, 0): 2.0, (0, 1): 1.0}, {(0, 0): 4.0, (1, 1): 3.0}, {}, {(0, 0): 1.0}], (2, 2))
    assert temporal_split(net, 1.0).train_target == temporal_split(net, 0.3, "plain-sum").train_target
    expected = combine_known_sets([net.snapshot(1).known, net.snapshot(2).known])
    assert temporal_split(net, 1.0).train_target == expected


def test_split_alternative_aggregations():
    net = network_from([{(0, 0): 2.0}, {(0, 0): 4.0, (0, 1): 1.0}, {}, {(0, 0): 1.0}], (1, 2))
    last = temporal_split(net, 0.5, "last-slice").train_target
    assert last == net.snapshot(2).known
    mean = temporal_split(net, 0.5, "decayed-mean").train_target
    assert mean.vals.tolist() == pytest.approx([(0.5 * 2.0 + 4.0) / 1.5, 1.0])
    with pytest.raises(ValueError):
        aggregation_weights(2, 0.5, "mystery")


def test_split_errors():
    net = network_from([{(0, 0): 1.0}] * 3, (1, 1))
    for theta in (0.0, 1.5, -1.0):
        with pytest.raises(ValueError):
            temporal_split(net, theta)
    with pytest.raises(NetworkConfigError):
        network_from([{(0, 0): 1.0}] * 2, (1, 1))


@given(known_sets(max_dim=4), known_sets(max_dim=4))
def test_theta_one_split_commutes_with_slice_addition(a, b):
    shape = (max(a[3][0], b[3][0]), max(a[3][1], b[3][1]))
    sa, sb = SparseKnownSet(*a[:3], shape), SparseKnownSet(*b[:3], shape)
    empty = SparseKnownSet.empty(shape)

    def target(first, second):
        net = TemporalNetwork(tuple(Snapshot(t, k) for t, k in enumerate([first, second, empty, empty], 1)),
                              NodeIndex.dense(*shape))
        return temporal_split(net, 1.0).train_target

    summed = combine_known_sets([sa, sb])
    lhs = target(sa, sb)
    rhs = target(summed, empty)
    assert lhs.rows.tolist() == rhs.rows.tolist() and lhs.cols.tolist() == rhs.cols.tolist()
    np.testing.assert_allclose(lhs.vals, rhs.vals, rtol=1e-12)


# --------------------------------------------------------------------------- serialization


@st.composite
def networks(draw):
    U, S, T = draw(st.integers(1, 4)), draw(st.integers(1, 4)), draw(st.integers(3, 5))
    slices = []
    for _ in range(T):
        n = draw(st.integers(0, U * S))
        cells = draw(st.lists(st.tuples(st.integers(0, U - 1), st.integers(0, S - 1)), min_size=n, max_size=n))
        values = draw(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=n, max_size=n))
        slices.append(SparseKnownSet([c[0] for c in cells], [c[1] for c in cells], values, (U, S)))
    return TemporalNetwork(tuple(Snapshot(t, k) for t, k in enumerate(slices, 1)), NodeIndex.dense(U, S))


@given(networks())
def test_network_serialization_round_trip(net):
    text = dumps_network(net)
    back = loads_network(text)
    assert back.T == net.T and back.shape == net.shape
    for a, b in zip(net.snapshots, back.snapshots):
        assert a.t == b.t and a.known == b.known
    assert dumps_network(back) == text


def test_network_format_header_and_order():
    net = network_from([{(1, 0): 2.0, (0, 1): 1.0}, {}, {(0, 0): 0.5}], (2, 2))
    lines = dumps_network(net).splitlines()
    assert lines[0] == "grnlfa-net v1 T=3 U=2 S=2"
    assert lines[1:] == ["1 0 1 1.0", "1 1 0 2.0", "3 0 0 0.5"]
    with pytest.raises(ValueError):
        loads_network("bogus header\n")
