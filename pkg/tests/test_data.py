import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from usersim.data import (
    Dataset,
    ItemCatalog,
    Session,
    State,
    build_transitions,
    ingest_logs,
    load_dataset,
    next_state,
    one_hot,
    read_embeddings,
    read_logs,
    save_dataset,
    split_train_test,
    transitions_from_sessions,
    upsample_positive,
    write_embeddings,
    write_logs,
)
from usersim.errors import (
    ConfigError,
    ContractError,
    DataError,
    ParseError,
    UnknownItemError,
    UnsatisfiableError,
)
from usersim.metrics import auc
from usersim.synth import SynthConfig, synth_world


def catalog_of(ids, dim=3, seed=0):
    return ItemCatalog(ids, np.random.default_rng(seed).uniform(-0.9, 0.9, (len(ids), dim)))


def random_sessions(rng, ids, count, lo=1, hi=12):
    out = []
    for s in range(count):
        length = int(rng.integers(lo, hi))
        out.append(Session(f"s{s}", [ids[j] for j in rng.integers(len(ids), size=length)],
                           rng.integers(2, size=length)))
    return out


# catalog / one-hot --------------------------------------------------------

def test_one_hot_negative_is_first_slot():
    assert np.array_equal(one_hot([0, 1]), [[1, 0], [0, 1]])
    with pytest.raises(ContractError):
        one_hot([2])


def test_catalog_validation():
    with pytest.raises(DataError):
        ItemCatalog(["a"], [[1.0, 0.0]])
    with pytest.raises(DataError):
        ItemCatalog(["a", "a"], np.zeros((2, 2)))
    with pytest.raises(ContractError):
        ItemCatalog(["a", "b"], np.zeros((3, 2)))
    cat = catalog_of(["b", "a"])
    assert cat.index("a") == 1
    with pytest.raises(UnknownItemError):
        cat.index("zz")
    assert cat.lexical_rank.tolist() == [1, 0]


# transitions ------------------------------------------------------------

def test_build_transitions_worked_example():
    s = Session("x", list("ABCDE"), [1, 0, 1, 0, 1])
    ts = build_transitions(s, 3)
    assert [(t.state.items, t.action, t.feedback) for t in ts] == [
        (("A", "B", "C"), "D", 0), (("B", "C", "D"), "E", 1)]
    assert [t.reward for t in ts] == [0.0, 1.0]


def test_build_transitions_boundaries():
    assert len(build_transitions(Session("x", list("ABCD"), [0] * 4), 3)) == 1
    assert build_transitions(Session("x", list("ABC"), [0] * 3), 3) == []


def test_next_state_worked_example():
    s = State(("A", "B", "C"), (1, 0, 1))
    out = next_state(s, "D", 0)
    assert out == State(("B", "C", "D"), (0, 1, 0))
    assert s == State(("A", "B", "C"), (1, 0, 1))


def test_next_state_replaces_window_after_n_steps():
    s = State(("A", "B", "C"), (1, 0, 1))
    for item in "XYZ":
        s = next_state(s, item, 1)
    assert s == State(tuple("XYZ"), (1, 1, 1))


def test_next_state_unknown_item():
    cat = catalog_of(list("ABC"))
    with pytest.raises(UnknownItemError):
        next_state(State(("A",), (1,)), "Q", 0, cat)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5))
def test_consecutive_transitions_follow_next_state(seed, n):
    rng = np.random.default_rng(seed)
    ids = [f"i{j}" for j in range(8)]
    for s in random_sessions(rng, ids, 5):
        ts = build_transitions(s, n)
        for a, b in zip(ts, ts[1:]):
            assert b.state == next_state(a.state, a.action, a.feedback)
        assert all(len(t.state) == n for t in ts)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_vectorised_transitions_match_scalar(seed, n):
    rng = np.random.default_rng(seed)
    ids = [f"i{j}" for j in range(6)]
    cat = catalog_of(ids)
    sessions = random_sessions(rng, ids, 6)
    ts = transitions_from_sessions(sessions, cat, n)
    expected = [t for s in sessions for t in build_transitions(s, n)]
    assert list(ts) == expected


# split / upsample -------------------------------------------------------

def test_split_counts_and_order():
    rng = np.random.default_rng(4)
    ids = [f"i{j}" for j in range(10)]
    ds = Dataset(catalog_of(ids), random_sessions(rng, ids, 40, 1, 15), 3)
    train, test = split_train_test(ds)
    assert len(train) + len(test) == len(ds)
    assert len(test) == len(ds.sessions)
    assert len(set(test.sessions.tolist())) == len(test)
    for s, pos in zip(test.sessions, test.positions):
        assert np.all(train.positions[train.sessions == s] < pos)


def test_split_two_and_one_transition_sessions():
    cat = catalog_of(list("ABCDE"))
    ds = Dataset(cat, [Session("two", list("ABCDE"), [0] * 5), Session("one", list("ABCD"), [1] * 4)], 3)
    train, test = ds.split()
    assert len(train) == 1 and len(test) == 2


def tiny_set(pos, neg):
    cat = catalog_of(["a", "b"])
    fb = [1] * pos + [0] * neg
    sessions = [Session(f"s{i}", ["a", "b"], [0, f]) for i, f in enumerate(fb)]
    return transitions_from_sessions(sessions, cat, 1)


def test_upsample_worked_example():
    ts = tiny_set(1, 9)
    up = upsample_positive(ts, 0.5, seed=3)
    assert len(up) == 18
    assert int(up.feedback.sum()) == 9
    assert up.subset(np.arange(10)).fingerprint() == ts.fingerprint()


def minimal_k(p, n, ratio):
    for k in itertools.count():
        if (p + k) >= ratio * (n + k):
            return k


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 30), st.integers(0, 30), st.floats(0.05, 0.95))
def test_upsample_minimal_count(pos, neg, ratio):
    ts = tiny_set(pos, neg)
    up = upsample_positive(ts, ratio, seed=0)
    assert len(up) - len(ts) == minimal_k(pos, pos + neg, ratio)
    assert up.subset(np.arange(len(ts))).fingerprint() == ts.fingerprint()
    assert np.all(up.feedback[len(ts):] == 1)


def test_upsample_identity_cases_and_errors():
    ts = tiny_set(3, 1)
    assert upsample_positive(ts, 0.5) is ts
    assert upsample_positive(tiny_set(0, 4), 0.0).fingerprint() == tiny_set(0, 4).fingerprint()
    with pytest.raises(UnsatisfiableError):
        upsample_positive(tiny_set(0, 4), 0.5)
    with pytest.raises(ContractError):
        upsample_positive(ts, 1.5)


def test_upsample_deterministic():
    ts = tiny_set(3, 20)
    assert upsample_positive(ts, 0.5, 7).fingerprint() == upsample_positive(ts, 0.5, 7).fingerprint()


# file formats and ingestion ----------------------------------------------

def write_corpus(tmp_path, sessions, catalog):
    write_logs(tmp_path / "logs.tsv", sessions)
    write_embeddings(tmp_path / "emb.txt", catalog)
    return tmp_path / "logs.tsv", tmp_path / "emb.txt"


def test_round_trip_formats(tmp_path):
    world = synth_world(SynthConfig(n_items=30, n_sessions=10, session_length=6, embedding_dim=4), 2)
    logs, emb = write_corpus(tmp_path, world.sessions, world.catalog)
    assert read_embeddings(emb) == world.catalog
    assert read_logs(logs) == world.sessions


def test_parse_errors_carry_line_numbers(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_text("s1\ta\t1\ns1\tb\n")
    with pytest.raises(ParseError) as exc:
        read_logs(p)
    assert exc.value.line == 2
    p.write_text("s1\ta\t1\ns2\tb\t0\ns1\tc\t0\n")
    with pytest.raises(ParseError, match="contiguous"):
        read_logs(p)
    p.write_text("s1\ta\t7\n")
    with pytest.raises(ParseError):
        read_logs(p)
    e = tmp_path / "emb.txt"
    e.write_text("|E|=2\na 0.1 0.2\nb 0.1\n")
    with pytest.raises(ParseError) as exc:
        read_embeddings(e)
    assert exc.value.line == 3
    e.write_text("a 0.1 0.2\n")
    with pytest.raises(ParseError):
        read_embeddings(e)


def test_ingest_unknown_items_listed(tmp_path):
    cat = catalog_of(["a", "b"])
    logs, emb = write_corpus(tmp_path, [Session("s", ["a", "zz", "b", "yy"], [0, 1, 0, 1])], cat)
    with pytest.raises(UnknownItemError) as exc:
        ingest_logs(logs, emb, min_count=1, n=1)
    assert exc.value.items == ["yy", "zz"]


def test_ingest_no_removals_when_all_frequent(tmp_path):
    ids = list("ABCD")
    sessions = [Session(f"s{i}", ids * 2, [1, 0] * 4) for i in range(3)]
    logs, emb = write_corpus(tmp_path, sessions, catalog_of(ids))
    ds = ingest_logs(logs, emb, min_count=5, n=3)
    assert ds.sessions == tuple(sessions)
    assert len(ds.catalog) == 4


def test_ingest_worked_example(tmp_path):
    n = 3
    common = list("ABCD")
    sessions = [Session("x", ["A", "B", "X", "C", "D"], [1, 0, 1, 0, 1]),
                Session("y", common, [0, 0, 1, 1])]
    logs, emb = write_corpus(tmp_path, sessions, catalog_of(common + ["X"]))
    ds = ingest_logs(logs, emb, min_count=2, n=n)
    kept = {s.session_id: s for s in ds.sessions}
    assert kept["x"].items == tuple("ABCD")
    assert len(build_transitions(kept["x"], n)) == 1
    assert "X" not in ds.catalog
    assert ds.diagnostics["items_removed"] == 1


def test_ingest_empty_warns(tmp_path):
    logs, emb = write_corpus(tmp_path, [Session("s", ["a", "b"], [0, 1])], catalog_of(["a", "b"]))
    with pytest.warns(RuntimeWarning):
        ds = ingest_logs(logs, emb, min_count=1, n=5)
    assert len(ds) == 0


def test_ingest_is_idempotent(tmp_path):
    rng = np.random.default_rng(8)
    ids = [f"i{j}" for j in range(25)]
    sessions = random_sessions(rng, ids, 60, 2, 12)
    logs, emb = write_corpus(tmp_path, sessions, catalog_of(ids))
    first = ingest_logs(logs, emb, min_count=5, n=3)
    d2 = tmp_path / "again"
    d2.mkdir()
    logs2, emb2 = write_corpus(d2, first.sessions, first.catalog)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        second = ingest_logs(logs2, emb2, min_count=5, n=3)
    assert second.sessions == first.sessions
    assert second.catalog == first.catalog


def test_dataset_save_load(tmp_path):
    world = synth_world(SynthConfig(n_items=20, n_sessions=8, session_length=7, embedding_dim=3), 1)
    ds = Dataset(world.catalog, world.sessions, 4, {0: -1.0, 1: 2.5})
    save_dataset(tmp_path / "d.json", ds)
    back = load_dataset(tmp_path / "d.json")
    assert back.sessions == ds.sessions and back.catalog == ds.catalog
    assert back.reward_map == {0: -1.0, 1: 2.5}
    assert back.transitions.fingerprint() == ds.transitions.fingerprint()
    assert np.array_equal(back.transitions.rewards, ds.transitions.rewards)


def test_reward_invariant():
    world = synth_world(SynthConfig(n_items=20, n_sessions=5, session_length=6, embedding_dim=3), 0)
    ds = Dataset(world.catalog, world.sessions, 2, {0: -0.5, 1: 3.0})
    for t in ds.transitions:
        assert t.reward == {0: -0.5, 1: 3.0}[t.feedback]


# synthetic world ----------------------------------------------------------

def test_synth_deterministic():
    cfg = SynthConfig(n_items=40, n_sessions=20, session_length=8, embedding_dim=5)
    a, b = synth_world(cfg, 3), synth_world(cfg, 3)
    assert a.sessions == b.sessions and a.catalog == b.catalog
    assert synth_world(cfg, 4).sessions != a.sessions


def test_synth_embeddings_in_range():
    w = synth_world(SynthConfig(n_items=100, n_sessions=2, embedding_dim=6), 0)
    assert np.all(np.abs(w.catalog.embeddings) < 0.99)


def test_synth_noiseless_feedback_is_sign_of_affinity():
    cfg = SynthConfig(n_items=50, n_sessions=30, session_length=10, embedding_dim=4,
                      noise_scale=0.0, threshold=0.0)
    w = synth_world(cfg, 1)
    for si, s in enumerate(w.sessions):
        score = w.affinity(si, list(s.items))
        assert np.array_equal(np.asarray(s.feedback), (score > 0).astype(int))


def test_synth_config_errors():
    with pytest.raises(ConfigError):
        SynthConfig(n_items=0).validate()
    with pytest.raises(ConfigError):
        SynthConfig.from_text("n_items = 3\nbogus = 1\n")
    assert SynthConfig.from_text("n_items = 7\n# comment\ntemperature = 2.5\n").temperature == 2.5


def test_planted_oracle_auc_matches_concordance():
    w = synth_world(SynthConfig(n_sessions=2000), 0)
    ts = w.transitions(5)
    scores = w.transition_scores(ts)
    labels = ts.feedback == 1
    value = auc(scores, labels)
    assert value > 0.5
    # direct pairwise concordance on the same data, computed by sorting
    pos, neg = np.sort(scores[labels]), np.sort(scores[~labels])
    below = np.searchsorted(neg, pos, side="left")
    ties = np.searchsorted(neg, pos, side="right") - below
    direct = (below.sum() + 0.5 * ties.sum()) / (pos.size * neg.size)
    assert abs(value - direct) < 1e-12
