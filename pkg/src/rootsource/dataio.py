"""Serialization formats, flat config files, and raw-comment ingestion.

File conventions: event streams are JSONL with a schema header line; model
parameters and evaluation reports are JSON documents; root-probability
matrices are CSV with a schema comment line; variational posteriors are npz
archives.  All floats are written with full repr precision so round-trips
are bit-exact.

Source labels are 1-based in every file format ("s", "root", the r_1..r_S
CSV columns, argmax_source) and 0-based in memory; token indices are 0-based
everywhere.  Parent references use 0 as the immigrant sentinel with 1-based
event indices, matching the in-memory convention.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .model import ConstantShape, EventSequence, ModelParams, unit_mark_impact
from .rootprob import RootProbMatrix
from .simulate import GroundTruth

__all__ = [
    "write_events", "read_events",
    "write_truth", "read_truth", "TruthInfo",
    "write_params", "read_params",
    "write_eta", "read_eta",
    "write_rootprob", "read_rootprob",
    "write_eval", "read_config",
    "RawComment", "Vocabulary", "tokenize", "ingest", "read_raw_comments",
]

EVENTS_SCHEMA = "events-v1"
TRUTH_SCHEMA = "truth-v1"
PARAMS_SCHEMA = "params-v1"
ETA_SCHEMA = "eta-v1"
ROOTPROB_SCHEMA = "rootprob-v1"
EVAL_SCHEMA = "eval-v1"


def _open(path_or_file, mode: str):
    if hasattr(path_or_file, "read") or hasattr(path_or_file, "write"):
        return path_or_file, False
    return open(path_or_file, mode), True


# ---------------------------------------------------------------- events ---

def write_events(events: EventSequence, path_or_file) -> None:
    """JSONL: header {"schema","T","S","V"}, then {"i","t","s","x"} per event."""
    fp, owned = _open(path_or_file, "w")
    try:
        fp.write(json.dumps({"schema": EVENTS_SCHEMA, "T": events.T,
                             "S": events.S, "V": events.V}) + "\n")
        for e in events:
            x = {str(int(v)): int(c) for v, c in zip(e.tokens, e.counts)}
            fp.write(json.dumps({"i": e.index, "t": e.t, "s": e.s + 1, "x": x}) + "\n")
    finally:
        if owned:
            fp.close()


def read_events(path_or_file) -> EventSequence:
    fp, owned = _open(path_or_file, "r")
    try:
        header_line = fp.readline()
        if not header_line.strip():
            raise ValidationError("empty events file: missing schema header")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as err:
            raise ValidationError(f"line 1: malformed header ({err})") from err
        if header.get("schema") != EVENTS_SCHEMA:
            raise ValidationError(
                f"schema mismatch: expected {EVENTS_SCHEMA}, got {header.get('schema')!r}")
        times, sources, indptr, tok_i, tok_c = [], [], [0], [], []
        for lineno, line in enumerate(fp, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                t, s, x = float(rec["t"]), int(rec["s"]), rec.get("x", {})
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
                raise ValidationError(f"line {lineno}: malformed event record ({err})") from err
            if s < 1:
                raise ValidationError(f"line {lineno}: source labels are 1-based in files")
            times.append(t)
            sources.append(s - 1)
            items = sorted((int(v), float(c)) for v, c in x.items())
            for v, c in items:
                tok_i.append(v)
                tok_c.append(c)
            indptr.append(len(tok_i))
        return EventSequence(
            np.array(times), np.array(sources, dtype=np.int64),
            np.array(indptr, dtype=np.int64),
            np.array(tok_i, dtype=np.int32), np.array(tok_c),
            T=float(header["T"]), S=int(header["S"]), V=int(header["V"]))
    finally:
        if owned:
            fp.close()


# ----------------------------------------------------------------- truth ---

@dataclass
class TruthInfo:
    """Ground-truth sidecar content: parent links and root source labels."""

    parent: np.ndarray        # 1-based event index, 0 = immigrant
    root_sources: np.ndarray  # 0-based source labels


def write_truth(truth: GroundTruth, path_or_file) -> None:
    """JSONL sidecar: header, then exactly {"i","parent","root"} per event."""
    fp, owned = _open(path_or_file, "w")
    try:
        fp.write(json.dumps({"schema": TRUTH_SCHEMA}) + "\n")
        parent = truth.branching.parent
        for k in range(len(parent)):
            fp.write(json.dumps({"i": k + 1, "parent": int(parent[k]),
                                 "root": int(truth.roots[k]) + 1}) + "\n")
    finally:
        if owned:
            fp.close()


def read_truth(path_or_file) -> TruthInfo:
    fp, owned = _open(path_or_file, "r")
    try:
        header_line = fp.readline()
        try:
            header = json.loads(header_line) if header_line.strip() else {}
        except json.JSONDecodeError as err:
            raise ValidationError(f"line 1: malformed header ({err})") from err
        if header.get("schema") != TRUTH_SCHEMA:
            raise ValidationError(
                f"schema mismatch: expected {TRUTH_SCHEMA}, got {header.get('schema')!r}")
        parent, root = [], []
        for lineno, line in enumerate(fp, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                parent.append(int(rec["parent"]))
                root.append(int(rec["root"]) - 1)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
                raise ValidationError(f"line {lineno}: malformed truth record ({err})") from err
        return TruthInfo(parent=np.array(parent, dtype=np.int64),
                         root_sources=np.array(root, dtype=np.int64))
    finally:
        if owned:
            fp.close()


# ---------------------------------------------------------------- params ---

def write_params(params: ModelParams, path_or_file) -> None:
    if params.mark_impact is not unit_mark_impact:
        raise ValidationError("custom mark-impact hooks are not serializable")
    if not isinstance(params.base_shape, ConstantShape):
        raise ValidationError("custom base-shape hooks are not serializable")
    doc = {
        "schema": PARAMS_SCHEMA,
        "rho": params.rho.tolist(),
        "A": params.A.tolist(),
        "theta": params.theta.tolist(),
        "gamma": params.gamma,
        "nu": params.nu,
        "base_shape": {"kind": "constant", "c": params.base_shape.c},
    }
    fp, owned = _open(path_or_file, "w")
    try:
        json.dump(doc, fp)
        fp.write("\n")
    finally:
        if owned:
            fp.close()


def read_params(path_or_file) -> ModelParams:
    fp, owned = _open(path_or_file, "r")
    try:
        try:
            doc = json.load(fp)
        except json.JSONDecodeError as err:
            raise ValidationError(f"malformed params document ({err})") from err
    finally:
        if owned:
            fp.close()
    if doc.get("schema") != PARAMS_SCHEMA:
        raise ValidationError(
            f"schema mismatch: expected {PARAMS_SCHEMA}, got {doc.get('schema')!r}")
    shape = doc.get("base_shape", {"kind": "constant", "c": 1.0})
    if shape.get("kind") != "constant":
        raise ValidationError(f"unsupported base shape {shape.get('kind')!r}")
    return ModelParams(rho=np.array(doc["rho"]), A=np.array(doc["A"]),
                       theta=np.array(doc["theta"]), gamma=doc["gamma"],
                       nu=doc["nu"], base_shape=ConstantShape(shape.get("c", 1.0)))


# ------------------------------------------------------------------- eta ---

def write_eta(state, path_or_file) -> None:
    """Sparse npz of the variational posteriors and their pair layout."""
    st = state.structure
    np.savez(path_or_file, schema=ETA_SCHEMA, nu=st.nu,
             window=np.nan if st.window is None else st.window,
             eta0=state.eta0, eta_pair=state.eta_pair, log_z=state.log_z,
             pair_i=st.pair_i, pair_j=st.pair_j)


def read_eta(path_or_file) -> dict:
    with np.load(path_or_file, allow_pickle=False) as z:
        if str(z["schema"]) != ETA_SCHEMA:
            raise ValidationError(
                f"schema mismatch: expected {ETA_SCHEMA}, got {z['schema']!r}")
        window = float(z["window"])
        return {
            "nu": float(z["nu"]),
            "window": None if math.isnan(window) else window,
            "eta0": z["eta0"], "eta_pair": z["eta_pair"], "log_z": z["log_z"],
            "pair_i": z["pair_i"], "pair_j": z["pair_j"],
        }


# -------------------------------------------------------------- rootprob ---

def write_rootprob(rpm: RootProbMatrix, path_or_file) -> None:
    """CSV: schema comment, then event_index,r_1..r_S,argmax_source rows."""
    fp, owned = _open(path_or_file, "w")
    try:
        fp.write(f"# {ROOTPROB_SCHEMA} mode={rpm.mode}\n")
        cols = ",".join(f"r_{s + 1}" for s in range(rpm.S))
        fp.write(f"event_index,{cols},argmax_source\n")
        arg = rpm.argmax_sources()
        for k in range(rpm.n):
            vals = ",".join(repr(float(v)) for v in rpm.r[k])
            fp.write(f"{k + 1},{vals},{arg[k] + 1}\n")
    finally:
        if owned:
            fp.close()


def read_rootprob(path_or_file) -> RootProbMatrix:
    fp, owned = _open(path_or_file, "r")
    try:
        head = fp.readline().strip()
        m = re.match(rf"#\s*{ROOTPROB_SCHEMA}\s+mode=(\w+)", head)
        if not m:
            raise ValidationError(
                f"line 1: expected '# {ROOTPROB_SCHEMA} mode=...' comment")
        mode = m.group(1)
        header = fp.readline().strip().split(",")
        if header[:1] != ["event_index"] or header[-1:] != ["argmax_source"]:
            raise ValidationError("line 2: malformed column header")
        S = len(header) - 2
        rows = []
        for lineno, line in enumerate(fp, start=3):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            if len(parts) != S + 2:
                raise ValidationError(f"line {lineno}: expected {S + 2} columns")
            try:
                rows.append([float(v) for v in parts[1:1 + S]])
            except ValueError as err:
                raise ValidationError(f"line {lineno}: malformed value ({err})") from err
        return RootProbMatrix(np.array(rows).reshape(len(rows), S), mode)
    finally:
        if owned:
            fp.close()


# ------------------------------------------------------------ eval / cfg ---

def write_eval(report, path_or_file) -> None:
    doc = {
        "schema": EVAL_SCHEMA,
        "n_events": report.n_events,
        "accuracy": report.accuracy,
        "log_prob": report.log_prob,
        "top_k": {str(k): v for k, v in report.top_k.items()},
        "power": [float(v) for v in report.power],
    }
    if report.rse_A is not None:
        doc["rse_A"] = report.rse_A
    if report.rse_theta is not None:
        doc["rse_theta"] = [float(v) for v in report.rse_theta]
    fp, owned = _open(path_or_file, "w")
    try:
        json.dump(doc, fp, indent=2)
        fp.write("\n")
    finally:
        if owned:
            fp.close()


def read_config(path) -> dict:
    """Flat key=value config file; '#' starts a comment; values stay strings."""
    out = {}
    with open(path) as fp:
        for lineno, line in enumerate(fp, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValidationError(f"{path}:{lineno}: expected key=value")
            key, val = text.split("=", 1)
            out[key.strip()] = val.strip()
    return out


# ------------------------------------------------------------- ingestion ---

@dataclass
class RawComment:
    """One raw record: timestamp, author, and either text or token counts."""

    t: float
    author: str
    text: str | None = None
    counts: dict | None = None  # pre-tokenized {token: count}; bypasses tokenizer


@dataclass
class Vocabulary:
    """Dense token->index map built from corpus counts."""

    token_to_index: dict
    min_count: int

    @property
    def V(self) -> int:
        return len(self.token_to_index)

    def index_of(self, token: str):
        return self.token_to_index.get(token)


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list:
    """Lowercase tokens split on whitespace/punctuation (runs of [a-z0-9] kept)."""
    return _TOKEN_RE.findall(text.lower())


def read_raw_comments(path_or_file) -> list:
    """JSONL of {"t","author","text"} (or {"t","author","x":{token:count}})."""
    fp, owned = _open(path_or_file, "r")
    try:
        out = []
        for lineno, line in enumerate(fp, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                t = float(rec["t"])
                author = str(rec["author"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
                raise ValidationError(f"line {lineno}: malformed comment record ({err})") from err
            if not author:
                raise ValidationError(f"line {lineno}: author must be nonempty")
            out.append(RawComment(t=t, author=author, text=rec.get("text"),
                                  counts=rec.get("x")))
        return out
    finally:
        if owned:
            fp.close()


def ingest(raws, min_count: int = 2, min_author_count: int = 5,
           stop_words=None, T: float | None = None, jitter: float | None = None):
    """Turn raw comments into an EventSequence plus vocabulary and source map.

    Authors with fewer than min_author_count comments are dropped; tokens
    seen fewer than min_count times (after author filtering) or listed in
    stop_words are dropped; sources are indexed densely by sorted author
    name.  Timestamps are shifted so the observation window starts at 0 (the
    earliest event is nudged to a tiny positive offset since the window is
    open at 0), and T is the last shifted timestamp unless given.  Exact
    timestamp ties are rejected; pass jitter=eps to repair them by adding
    i*eps in time order.
    """
    raws = list(raws)
    if not raws:
        raise ValidationError("empty comment stream")
    author_counts: dict[str, int] = {}
    for c in raws:
        author_counts[c.author] = author_counts.get(c.author, 0) + 1
    kept = [c for c in raws if author_counts[c.author] >= min_author_count]
    if not kept:
        raise ValidationError("no comments left after author filtering")
    authors = sorted({c.author for c in kept})
    source_map = {a: k for k, a in enumerate(authors)}

    stop = set(stop_words or ())
    tokened = []
    counts: dict[str, int] = {}
    for c in kept:
        if c.counts is not None:
            bag = {str(t): int(v) for t, v in c.counts.items()}
        else:
            bag = {}
            for t in tokenize(c.text or ""):
                bag[t] = bag.get(t, 0) + 1
        tokened.append(bag)
        for t, v in bag.items():
            counts[t] = counts.get(t, 0) + v
    vocab_tokens = sorted(t for t, v in counts.items() if v >= min_count and t not in stop)
    vocab = Vocabulary(token_to_index={t: k for k, t in enumerate(vocab_tokens)},
                       min_count=min_count)

    order = sorted(range(len(kept)), key=lambda k: kept[k].t)
    times = np.array([kept[k].t for k in order])
    if jitter is not None:
        if jitter <= 0:
            raise ValidationError("jitter must be positive")
        times = times + jitter * np.arange(len(times))
    if np.any(np.diff(times) <= 0):
        k = int(np.argmax(np.diff(times) <= 0))
        raise ValidationError(
            f"exact timestamp tie between comments {k + 1} and {k + 2}; "
            "re-run with a jitter to repair")
    eps = jitter if jitter is not None else 1e-9
    times = times - times[0] + eps

    t_max = float(times[-1])
    horizon = float(T) if T is not None else t_max
    if horizon < t_max:
        raise ValidationError("T must cover the last comment")

    sources, indptr, tok_i, tok_c = [], [0], [], []
    for k in order:
        sources.append(source_map[kept[k].author])
        items = sorted((vocab.token_to_index[t], v) for t, v in tokened[k].items()
                       if t in vocab.token_to_index)
        for v, c in items:
            tok_i.append(v)
            tok_c.append(c)
        indptr.append(len(tok_i))
    events = EventSequence(
        times, np.array(sources, dtype=np.int64), np.array(indptr, dtype=np.int64),
        np.array(tok_i, dtype=np.int32), np.array(tok_c),
        T=horizon, S=len(authors), V=vocab.V)
    return events, vocab, source_map
