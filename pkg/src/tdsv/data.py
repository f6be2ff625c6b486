"""Domain types and file formats.

File formats
------------
Binary embeddings (little-endian)::

    b"TDSVEMB1" | u32 dim | u64 count | count x [u16 id_len | id utf-8 | dim x f32]

Text embeddings: one ``id v1 ... vD`` record per line.

Tab-separated tables:

* trials      ``model_id  test_utt_id  [TC|TW|IC|IW]``
* models      ``model_id  phrase_id  utt1,utt2,utt3``
* posteriors  ``utt_id  p0 p1 ... p10``
* scores      ``model_id  test_utt_id  score`` (6 decimals)
* speaker map ``utt_id  speaker_id``

Frame features: first line ``T F``, then T rows of F floats.
"""
from __future__ import annotations

import enum
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import (
    BadMagicError,
    ColumnCountError,
    DataError,
    DimensionMismatchError,
    DuplicateIdError,
    FormatError,
    MissingHeaderError,
    NonFiniteError,
    ProbabilitySumError,
    TruncatedError,
    UnknownLabelError,
    UnresolvedIdError,
    ValueRangeError,
)

MAGIC = b"TDSVEMB1"
_HEADER = struct.Struct("<8sIQ")
_IDLEN = struct.Struct("<H")

NUM_PHRASES = 10
FREE_TEXT_CLASS = 10
NUM_CLASSES = 11
POSTERIOR_SUM_TOL = 1e-4
ENROLL_UTTS = 3


class TrialLabel(str, enum.Enum):
    TC = "TC"  # target speaker, correct phrase
    TW = "TW"  # target speaker, wrong phrase
    IC = "IC"  # imposter, correct phrase
    IW = "IW"  # imposter, wrong phrase


class Trial(NamedTuple):
    model_id: str
    test_utt_id: str
    label: TrialLabel | None = None


class ScoreRecord(NamedTuple):
    model_id: str
    test_utt_id: str
    score: float


@dataclass(frozen=True)
class ModelDefinition:
    model_id: str
    phrase_id: int
    enrollment_utts: tuple[str, ...]

    def __post_init__(self):
        if not self.model_id:
            raise DataError("empty model id")
        if not 0 <= self.phrase_id < NUM_PHRASES:
            raise DataError(f"model {self.model_id}: phrase id {self.phrase_id} outside [0, {NUM_PHRASES - 1}]")
        if not self.enrollment_utts:
            raise DataError(f"model {self.model_id}: no enrollment utterances")
        object.__setattr__(self, "enrollment_utts", tuple(self.enrollment_utts))


@dataclass(frozen=True)
class PhrasePosterior:
    utt_id: str
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        check_posterior(probs, self.utt_id)
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)


def check_posterior(probs: np.ndarray, utt_id: str = "?", path=None, where=None) -> None:
    if probs.shape != (NUM_CLASSES,):
        raise ColumnCountError(f"utterance {utt_id}: expected {NUM_CLASSES} probabilities, got {probs.size}", path, where)
    if not np.all(np.isfinite(probs)):
        raise NonFiniteError(f"utterance {utt_id}: non-finite probability", path, where)
    if np.any(probs < 0):
        raise ValueRangeError(f"utterance {utt_id}: negative probability", path, where)
    total = float(probs.sum())
    if abs(total - 1.0) > POSTERIOR_SUM_TOL:
        raise ProbabilitySumError(f"utterance {utt_id}: probabilities sum to {total:.6g}", path, where)


class EmbeddingStore:
    """Immutable id -> float32 vector table.

    Vectors live in one read-only ``(N, D)`` matrix, so a store can be shared
    between threads without locking.
    """

    def __init__(self, ids: Sequence[str], matrix):
        ids = tuple(ids)
        matrix = np.array(matrix, dtype=np.float32, copy=True)
        if matrix.size == 0 and not ids:
            matrix = matrix.reshape(0, matrix.shape[1] if matrix.ndim == 2 else 0)
        if matrix.ndim != 2 or matrix.shape[0] != len(ids):
            raise DataError(f"expected a ({len(ids)}, D) matrix, got shape {matrix.shape}")
        if ids and matrix.shape[1] == 0:
            raise DataError("embedding dimension must be positive")
        index = {}
        for i, key in enumerate(ids):
            if key in index:
                raise DuplicateIdError(f"duplicate id {key!r}", where=f"record {i + 1}")
            index[key] = i
        bad = ~np.isfinite(matrix).all(axis=1)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise NonFiniteError(f"non-finite value in {ids[i]!r}", where=f"record {i + 1}")
        matrix.flags.writeable = False
        self._ids = ids
        self._index = index
        self._matrix = matrix

    @classmethod
    def from_mapping(cls, mapping) -> "EmbeddingStore":
        ids = list(mapping)
        if not ids:
            return cls([], np.zeros((0, 0), np.float32))
        return cls(ids, np.stack([np.asarray(mapping[k], dtype=np.float32) for k in ids]))

    @property
    def dim(self) -> int | None:
        return self._matrix.shape[1] if self._ids else None

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    @property
    def index(self):
        """Read-only id -> row mapping."""
        return MappingProxyType(self._index)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    def __len__(self):
        return len(self._ids)

    def __contains__(self, key):
        return key in self._index

    def __iter__(self) -> Iterator[str]:
        return iter(self._ids)

    def __getitem__(self, key: str) -> np.ndarray:
        try:
            return self._matrix[self._index[key]]
        except KeyError:
            raise UnresolvedIdError(f"unknown embedding id {key!r}") from None

    def index_of(self, key: str) -> int:
        try:
            return self._index[key]
        except KeyError:
            raise UnresolvedIdError(f"unknown embedding id {key!r}") from None

    def items(self):
        return zip(self._ids, self._matrix)


def atomic_write(path, data) -> None:
    """Write ``data`` (str or bytes) to ``path`` via a temp file and rename."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _data_lines(path) -> Iterator[tuple[int, str]]:
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, 1):
            try:
                line = raw.decode("utf-8").rstrip("\r\n")
            except UnicodeDecodeError:
                raise FormatError("not valid UTF-8 text", path, f"line {lineno}") from None
            if line.strip():
                yield lineno, line


# --- embeddings ---------------------------------------------------------------

def _looks_like_text(head: bytes) -> bool:
    text = head.decode("utf-8", errors="ignore")
    # a multi-byte character cut at the end of ``head`` may be dropped
    return len(text.encode("utf-8")) >= len(head) - 3 and all(c.isprintable() or c in "\t\r\n" for c in text)


def detect_format(path) -> str:
    """``.txt`` files are text.  Anything else is binary unless it lacks the
    magic and its first bytes read as text; empty and damaged files are
    treated as binary so the binary reader can name what is wrong."""
    if str(path).endswith(".txt"):
        return "text"
    with open(path, "rb") as fh:
        head = fh.read(256)
    if not head or head.startswith(MAGIC) or not _looks_like_text(head):
        return "binary"
    return "text"


def read_embeddings(path, format: str | None = None) -> EmbeddingStore:
    """Read an embedding file; ``format`` is ``"binary"``, ``"text"`` or
    ``None`` to sniff the magic bytes."""
    if format is None:
        format = detect_format(path)
    if format == "binary":
        return _read_binary(path)
    if format == "text":
        return _read_text(path)
    raise ValueError(f"unknown embedding format {format!r}")


def _read_binary(path) -> EmbeddingStore:
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size:
        raise MissingHeaderError("missing header", path, "offset 0")
    magic, dim, count = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}", path, "offset 0")
    if dim == 0:
        raise ValueRangeError("dimension must be positive", path, "offset 8")
    vec_bytes = 4 * dim
    ids: list[str] = []
    seen: set[str] = set()
    rows = np.empty((count, dim), dtype=np.float32) if count * vec_bytes <= len(buf) else None
    if rows is None:
        raise TruncatedError(f"header announces {count} records of dim {dim}; file too short", path, "offset 12")
    off = _HEADER.size
    for i in range(count):
        where = f"record {i + 1}, offset {off}"
        if off + _IDLEN.size > len(buf):
            raise TruncatedError("truncated record", path, where)
        (n,) = _IDLEN.unpack_from(buf, off)
        off += _IDLEN.size
        if off + n + vec_bytes > len(buf):
            raise TruncatedError("truncated record", path, where)
        try:
            key = buf[off:off + n].decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("id is not valid UTF-8", path, where) from None
        if not key:
            raise ValueRangeError("empty id", path, where)
        if key in seen:
            raise DuplicateIdError(f"duplicate id {key!r}", path, where)
        seen.add(key)
        off += n
        vec = np.frombuffer(buf, dtype="<f4", count=dim, offset=off)
        if not np.isfinite(vec).all():
            raise NonFiniteError(f"non-finite value in {key!r}", path, where)
        rows[i] = vec
        ids.append(key)
        off += vec_bytes
    if off != len(buf):
        raise FormatError(f"{len(buf) - off} trailing bytes after last record", path, f"offset {off}")
    return EmbeddingStore(ids, rows)


def _read_text(path) -> EmbeddingStore:
    ids: list[str] = []
    rows: list[np.ndarray] = []
    seen: set[str] = set()
    dim = None
    for lineno, line in _data_lines(path):
        where = f"record {len(ids) + 1}, line {lineno}"
        parts = line.split()
        key, values = parts[0], parts[1:]
        if not values:
            raise ColumnCountError(f"record {key!r} has no values", path, where)
        if dim is None:
            dim = len(values)
        elif len(values) != dim:
            raise DimensionMismatchError(f"record {key!r} has dimension {len(values)}, expected {dim}", path, where)
        if key in seen:
            raise DuplicateIdError(f"duplicate id {key!r}", path, where)
        try:
            vec = np.array([float(v) for v in values], dtype=np.float64)
        except ValueError:
            raise FormatError(f"record {key!r}: unparsable value", path, where) from None
        with np.errstate(over="ignore"):
            vec32 = vec.astype(np.float32)
        if not np.isfinite(vec32).all():
            raise NonFiniteError(f"non-finite value in {key!r}", path, where)
        seen.add(key)
        ids.append(key)
        rows.append(vec32)
    if not ids:
        return EmbeddingStore([], np.zeros((0, 0), np.float32))
    return EmbeddingStore(ids, np.stack(rows))


def write_embeddings(path, store: EmbeddingStore, format: str | None = None) -> None:
    """Write ``store``; ``format`` defaults to :func:`format_for_path`."""
    if format is None:
        format = format_for_path(path)
    if format == "binary":
        atomic_write(path, encode_binary(store))
    elif format == "text":
        lines = []
        for key, vec in store.items():
            lines.append(key + " " + " ".join(str(v) for v in vec))
        atomic_write(path, "".join(line + "\n" for line in lines))
    else:
        raise ValueError(f"unknown embedding format {format!r}")


def encode_binary(store: EmbeddingStore) -> bytes:
    if store.dim is None:
        raise DataError("cannot write an empty store in binary format (dimension unknown)")
    vecs = store.matrix.astype("<f4")
    parts = [_HEADER.pack(MAGIC, store.dim, len(store))]
    for key, vec in zip(store.ids, vecs):
        raw = key.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise DataError(f"id too long: {key[:32]!r}...")
        parts.append(_IDLEN.pack(len(raw)))
        parts.append(raw)
        parts.append(vec.tobytes())
    return b"".join(parts)


def format_for_path(path) -> str:
    """Text format for ``.txt`` files, binary otherwise."""
    return "text" if str(path).endswith(".txt") else "binary"


# --- frame features -----------------------------------------------------------

def read_frames(path) -> np.ndarray:
    lines = list(_data_lines(path))
    if not lines:
        raise MissingHeaderError("missing 'T F' header", path)
    lineno, header = lines[0]
    try:
        t, f = (int(x) for x in header.split())
    except ValueError:
        raise FormatError("header must be two integers 'T F'", path, f"line {lineno}") from None
    if t < 1 or f < 1:
        raise ValueRangeError("T and F must be positive", path, f"line {lineno}")
    if len(lines) - 1 != t:
        raise ColumnCountError(f"header announces {t} frames, found {len(lines) - 1}", path)
    out = np.empty((t, f))
    for row, (lineno, line) in enumerate(lines[1:]):
        parts = line.split()
        if len(parts) != f:
            raise DimensionMismatchError(f"frame has {len(parts)} values, expected {f}", path, f"line {lineno}")
        try:
            out[row] = [float(v) for v in parts]
        except ValueError:
            raise FormatError("unparsable value", path, f"line {lineno}") from None
    if not np.isfinite(out).all():
        raise NonFiniteError("non-finite frame value", path)
    return out


def write_frames(path, frames) -> None:
    frames = np.asarray(frames, dtype=np.float64)
    body = [f"{frames.shape[0]} {frames.shape[1]}"]
    body += [" ".join(repr(float(v)) for v in row) for row in frames]
    atomic_write(path, "\n".join(body) + "\n")


# --- tables -------------------------------------------------------------------

def _split(line, path, lineno, allowed):
    cols = line.split("\t")
    if len(cols) not in allowed:
        want = " or ".join(str(n) for n in allowed)
        raise ColumnCountError(f"expected {want} tab-separated columns, got {len(cols)}", path, f"line {lineno}")
    if any(not c for c in cols):
        raise ValueRangeError("empty field", path, f"line {lineno}")
    return cols


def parse_label(token: str, path=None, where=None) -> TrialLabel:
    try:
        return TrialLabel(token)
    except ValueError:
        raise UnknownLabelError(f"unknown trial label {token!r}", path, where) from None


def read_trials(path) -> list[Trial]:
    trials = []
    for lineno, line in _data_lines(path):
        cols = _split(line, path, lineno, (2, 3))
        label = parse_label(cols[2], path, f"line {lineno}") if len(cols) == 3 else None
        trials.append(Trial(cols[0], cols[1], label))
    return trials


def write_trials(path, trials: Iterable[Trial]) -> None:
    out = []
    for t in trials:
        cols = [t.model_id, t.test_utt_id]
        if t.label is not None:
            cols.append(TrialLabel(t.label).value)
        out.append("\t".join(cols) + "\n")
    atomic_write(path, "".join(out))


def read_models(path) -> list[ModelDefinition]:
    models = []
    seen = set()
    for lineno, line in _data_lines(path):
        where = f"line {lineno}"
        model_id, phrase, utts = _split(line, path, lineno, (3,))
        try:
            phrase_id = int(phrase)
        except ValueError:
            raise FormatError(f"phrase id {phrase!r} is not an integer", path, where) from None
        if not 0 <= phrase_id < NUM_PHRASES:
            raise ValueRangeError(f"phrase id {phrase_id} outside [0, {NUM_PHRASES - 1}]", path, where)
        enroll = tuple(utts.split(","))
        if any(not u for u in enroll):
            raise ValueRangeError("empty enrollment utterance id", path, where)
        if model_id in seen:
            raise DuplicateIdError(f"duplicate model {model_id!r}", path, where)
        seen.add(model_id)
        models.append(ModelDefinition(model_id, phrase_id, enroll))
    return models


def write_models(path, models: Iterable[ModelDefinition]) -> None:
    atomic_write(path, "".join(
        f"{m.model_id}\t{m.phrase_id}\t{','.join(m.enrollment_utts)}\n" for m in models))


def read_posteriors(path) -> list[PhrasePosterior]:
    out = []
    seen = set()
    for lineno, line in _data_lines(path):
        where = f"line {lineno}"
        utt, values = _split(line, path, lineno, (2,))
        try:
            probs = np.array([float(v) for v in values.split()])
        except ValueError:
            raise FormatError("unparsable probability", path, where) from None
        check_posterior(probs, utt, path, where)
        if utt in seen:
            raise DuplicateIdError(f"duplicate posterior for {utt!r}", path, where)
        seen.add(utt)
        out.append(PhrasePosterior(utt, probs))
    return out


def write_posteriors(path, posteriors: Iterable[PhrasePosterior]) -> None:
    atomic_write(path, "".join(
        p.utt_id + "\t" + " ".join(repr(float(v)) for v in p.probs) + "\n" for p in posteriors))


def read_scores(path) -> list[ScoreRecord]:
    out = []
    for lineno, line in _data_lines(path):
        m, t, s = _split(line, path, lineno, (3,))
        try:
            score = float(s)
        except ValueError:
            raise FormatError(f"unparsable score {s!r}", path, f"line {lineno}") from None
        if not math.isfinite(score):
            raise NonFiniteError(f"non-finite score {s!r}", path, f"line {lineno}")
        out.append(ScoreRecord(m, t, score))
    return out


def format_scores(records: Iterable[ScoreRecord]) -> str:
    return "".join(f"{r.model_id}\t{r.test_utt_id}\t{r.score:.6f}\n" for r in records)


def write_scores(path, records: Iterable[ScoreRecord]) -> None:
    atomic_write(path, format_scores(records))


def read_speaker_map(path) -> dict[str, str]:
    out = {}
    for lineno, line in _data_lines(path):
        utt, spk = _split(line, path, lineno, (2,))
        if utt in out:
            raise DuplicateIdError(f"duplicate utterance {utt!r}", path, f"line {lineno}")
        out[utt] = spk
    return out


def write_speaker_map(path, speaker_of: dict[str, str]) -> None:
    atomic_write(path, "".join(f"{u}\t{s}\n" for u, s in speaker_of.items()))
