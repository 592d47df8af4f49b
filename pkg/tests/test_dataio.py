import io
import json

import numpy as np
import pytest

import rootsource as rs
from rootsource.dataio import (
    RawComment,
    ingest,
    read_config,
    read_eta,
    read_events,
    read_params,
    read_raw_comments,
    read_rootprob,
    read_truth,
    tokenize,
    write_eta,
    write_eval,
    write_events,
    write_params,
    write_rootprob,
    write_truth,
)
from rootsource.errors import ValidationError
from rootsource.fitting import update_eta
from rootsource.metrics import evaluate_root_probabilities
from rootsource.rootprob import RootProbMatrix, root_probabilities
from rootsource.simulate import make_synthetic_config, simulate
from util import random_instance


@pytest.fixture(scope="module")
def sim():
    cfg = make_synthetic_config(T=30.0, seed=0, S=3, V=50)
    return simulate(cfg)


def test_events_round_trip(sim):
    events, _ = sim
    buf = io.StringIO()
    write_events(events, buf)
    buf.seek(0)
    back = read_events(buf)
    np.testing.assert_array_equal(back.times, events.times)
    np.testing.assert_array_equal(back.sources, events.sources)
    np.testing.assert_array_equal(back.tok_index, events.tok_index)
    np.testing.assert_array_equal(back.tok_count, events.tok_count)
    assert (back.T, back.S, back.V) == (events.T, events.S, events.V)


def test_events_file_uses_one_based_sources(sim):
    events, _ = sim
    buf = io.StringIO()
    write_events(events, buf)
    lines = buf.getvalue().splitlines()
    head = json.loads(lines[0])
    assert head["schema"] == "events-v1"
    first = json.loads(lines[1])
    assert first["s"] == events.sources[0] + 1
    assert set(first) == {"i", "t", "s", "x"}
    # an empty mark serializes as an empty object
    k = int(np.argmax(events.lengths == 0))
    if events.lengths[k] == 0:
        assert json.loads(lines[k + 1])["x"] == {}


def test_events_read_errors():
    with pytest.raises(ValidationError, match="header"):
        read_events(io.StringIO(""))
    with pytest.raises(ValidationError, match="schema"):
        read_events(io.StringIO('{"schema": "nope", "T": 1, "S": 1, "V": 0}\n'))
    head = '{"schema": "events-v1", "T": 5.0, "S": 2, "V": 3}\n'
    with pytest.raises(ValidationError, match="line 2"):
        read_events(io.StringIO(head + "not json\n"))
    with pytest.raises(ValidationError, match="line 3"):
        read_events(io.StringIO(
            head + '{"i": 1, "t": 1.0, "s": 1, "x": {}}\n{"i": 2, "t": 2.0}\n'))
    with pytest.raises(ValidationError, match="1-based"):
        read_events(io.StringIO(head + '{"i": 1, "t": 1.0, "s": 0, "x": {}}\n'))


def test_truth_round_trip(sim):
    events, truth = sim
    buf = io.StringIO()
    write_truth(truth, buf)
    lines = buf.getvalue().splitlines()
    assert json.loads(lines[0]) == {"schema": "truth-v1"}
    rec = json.loads(lines[1])
    assert set(rec) == {"i", "parent", "root"}
    assert rec["root"] == truth.roots[0] + 1  # 1-based in files
    buf.seek(0)
    back = read_truth(buf)
    np.testing.assert_array_equal(back.parent, truth.branching.parent)
    np.testing.assert_array_equal(back.root_sources, truth.roots)


def test_params_round_trip():
    rng = np.random.default_rng(3)
    _, params = random_instance(rng)
    buf = io.StringIO()
    write_params(params, buf)
    buf.seek(0)
    back = read_params(buf)
    np.testing.assert_array_equal(back.rho, params.rho)
    np.testing.assert_array_equal(back.A, params.A)
    np.testing.assert_array_equal(back.theta, params.theta)
    assert back.gamma == params.gamma and back.nu == params.nu
    assert isinstance(back.base_shape, rs.ConstantShape)


def test_params_refuses_custom_hooks():
    rng = np.random.default_rng(5)
    _, params = random_instance(rng)
    hooked = rs.ModelParams(rho=params.rho, A=params.A, theta=params.theta,
                            gamma=params.gamma, nu=params.nu,
                            mark_impact=lambda tokens, counts: 2.0)
    with pytest.raises(ValidationError, match="mark-impact"):
        write_params(hooked, io.StringIO())
    with pytest.raises(ValidationError, match="schema"):
        read_params(io.StringIO('{"schema": "params-v0"}'))
    with pytest.raises(ValidationError, match="malformed"):
        read_params(io.StringIO("{broken"))


def test_params_preserves_constant_shape_scale():
    rng = np.random.default_rng(7)
    _, params = random_instance(rng)
    scaled = rs.ModelParams(rho=params.rho, A=params.A, theta=params.theta,
                            gamma=params.gamma, nu=params.nu,
                            base_shape=rs.ConstantShape(2.5))
    buf = io.StringIO()
    write_params(scaled, buf)
    buf.seek(0)
    assert read_params(buf).base_shape.c == 2.5


def test_eta_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    events, params = random_instance(rng)
    state = update_eta(events, params, window=50.0)
    path = tmp_path / "eta.npz"
    write_eta(state, path)
    back = read_eta(path)
    np.testing.assert_array_equal(back["eta0"], state.eta0)
    np.testing.assert_array_equal(back["eta_pair"], state.eta_pair)
    np.testing.assert_array_equal(back["log_z"], state.log_z)
    np.testing.assert_array_equal(back["pair_i"], state.structure.pair_i)
    assert back["nu"] == params.nu and back["window"] == 50.0

    exact = update_eta(events, params)
    path2 = tmp_path / "eta_exact.npz"
    write_eta(exact, path2)
    assert read_eta(path2)["window"] is None


def test_rootprob_round_trip(sim):
    events, _ = sim
    params = make_synthetic_config(T=30.0, seed=0, S=3, V=50).params
    rpm = root_probabilities(events, params)
    buf = io.StringIO()
    write_rootprob(rpm, buf)
    text = buf.getvalue().splitlines()
    assert text[0] == "# rootprob-v1 mode=full"
    assert text[1] == "event_index,r_1,r_2,r_3,argmax_source"
    assert text[2].split(",")[0] == "1"
    assert text[2].split(",")[-1] == str(rpm.argmax_sources()[0] + 1)
    buf.seek(0)
    back = read_rootprob(buf)
    np.testing.assert_array_equal(back.r, rpm.r)  # repr round-trips exactly
    assert back.mode == "full"


def test_rootprob_read_errors():
    with pytest.raises(ValidationError, match="line 1"):
        read_rootprob(io.StringIO("event_index,r_1\n"))
    good = "# rootprob-v1 mode=full\nevent_index,r_1,r_2,argmax_source\n"
    with pytest.raises(ValidationError, match="line 3"):
        read_rootprob(io.StringIO(good + "1,0.5\n"))
    with pytest.raises(ValidationError, match="line 3"):
        read_rootprob(io.StringIO(good + "1,0.5,oops,1\n"))


def test_eval_write(sim):
    events, truth = sim
    params = make_synthetic_config(T=30.0, seed=0, S=3, V=50).params
    rep = evaluate_root_probabilities(root_probabilities(events, params),
                                      truth.roots)
    buf = io.StringIO()
    write_eval(rep, buf)
    doc = json.loads(buf.getvalue())
    assert doc["schema"] == "eval-v1"
    assert doc["n_events"] == len(events)
    assert set(doc["top_k"]) == {"1", "2", "3"}
    assert len(doc["power"]) == 3


def test_read_config(tmp_path):
    p = tmp_path / "fit.cfg"
    p.write_text("# comment line\nnu = 10.0\ntol=1e-5   # trailing\n\nseed=3\n")
    assert read_config(p) == {"nu": "10.0", "tol": "1e-5", "seed": "3"}
    bad = tmp_path / "bad.cfg"
    bad.write_text("nu 10\n")
    with pytest.raises(ValidationError, match="key=value"):
        read_config(bad)


def test_tokenize():
    assert tokenize("Hello, world! HELLO x2") == ["hello", "world", "hello", "x2"]
    assert tokenize("...") == []


def test_read_raw_comments():
    buf = io.StringIO(
        '{"t": 1.0, "author": "a", "text": "hi there"}\n'
        '{"t": 2.0, "author": "b", "x": {"hi": 2}}\n')
    raws = read_raw_comments(buf)
    assert raws[0].text == "hi there" and raws[0].counts is None
    assert raws[1].counts == {"hi": 2}
    with pytest.raises(ValidationError, match="line 1"):
        read_raw_comments(io.StringIO("nope\n"))
    with pytest.raises(ValidationError, match="line 2"):
        read_raw_comments(io.StringIO('{"t": 1.0, "author": "a"}\n{"t": 2.0}\n'))
    with pytest.raises(ValidationError, match="nonempty"):
        read_raw_comments(io.StringIO('{"t": 1.0, "author": ""}\n'))


def raw_stream():
    # authors: a posts 3 times, b posts 2, c posts 1
    return [
        RawComment(t=10.0, author="b", text="alpha beta alpha"),
        RawComment(t=11.0, author="a", text="beta gamma"),
        RawComment(t=12.0, author="a", text="alpha rare"),
        RawComment(t=13.0, author="c", text="alpha beta"),
        RawComment(t=14.0, author="a", text="beta beta"),
        RawComment(t=15.0, author="b", text="gamma"),
    ]


def test_ingest_filters_authors_and_tokens():
    events, vocab, source_map = ingest(raw_stream(), min_count=2,
                                       min_author_count=2)
    # c is dropped; sources are dense over sorted surviving authors
    assert source_map == {"a": 0, "b": 1}
    assert len(events) == 5
    # counts after author filtering: alpha 3, beta 5, gamma 2, rare 1
    assert set(vocab.token_to_index) == {"alpha", "beta", "gamma"}
    assert vocab.index_of("rare") is None
    assert events.S == 2 and events.V == 3
    # times shifted to a tiny positive start, horizon at the last comment
    assert events.times[0] == pytest.approx(1e-9)
    assert events.T == events.times[-1]

    no_beta, vocab2, _ = ingest(raw_stream(), min_count=2, min_author_count=2,
                                stop_words={"beta"})
    assert set(vocab2.token_to_index) == {"alpha", "gamma"}
    assert no_beta.lengths.sum() < events.lengths.sum()


def test_ingest_pretokenized_and_horizon():
    raws = [RawComment(t=float(k), author="a", counts={"tok": 1 + k})
            for k in range(4)]
    events, vocab, _ = ingest(raws, min_count=1, min_author_count=1, T=99.0)
    assert events.T == 99.0
    np.testing.assert_array_equal(events.tok_count, [1, 2, 3, 4])
    assert vocab.token_to_index == {"tok": 0}
    with pytest.raises(ValidationError, match="cover"):
        ingest(raws, min_count=1, min_author_count=1, T=0.5)


def test_ingest_rejects_ties_unless_jittered():
    raws = [RawComment(t=5.0, author="a", text="x"),
            RawComment(t=5.0, author="a", text="y"),
            RawComment(t=6.0, author="a", text="z")]
    with pytest.raises(ValidationError, match="comments 1 and 2"):
        ingest(raws, min_count=1, min_author_count=1)
    events, _, _ = ingest(raws, min_count=1, min_author_count=1, jitter=1e-6)
    assert len(events) == 3
    assert np.all(np.diff(events.times) > 0)
    with pytest.raises(ValidationError):
        ingest(raws, min_count=1, min_author_count=1, jitter=-1.0)


def test_ingest_empty_inputs():
    with pytest.raises(ValidationError, match="empty"):
        ingest([])
    with pytest.raises(ValidationError, match="author filtering"):
        ingest([RawComment(t=1.0, author="a", text="x")], min_author_count=5)
