"""Propensity-logged interaction records and their JSON Lines format.

Each line holds one round::

    {"t": 12, "ctx": 0, "items": [4, 17], "props": [0.031, 0.029],
     "rewards": [0, 1], "pvec": {"0": 0.004, ...}}

``props[j]`` is the probability slot ``j`` had at the moment it was drawn;
``pvec`` (optional) is the full distribution the first slot was drawn from.
Dataset metadata lives in a separate ``<name>.meta.json`` file next to the log,
or in a leading ``{"meta": ...}`` line when the dataset is serialized as a
single stream.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Hashable, Iterable, Mapping, Sequence

import numpy as np

FIELDS = ("t", "ctx", "items", "props", "rewards")
PVEC_TOLERANCE = 1e-9


class LogFormatError(ValueError):
    """A log line could not be parsed or violates the record invariants."""

    def __init__(self, message: str, lineno: int | None = None, zero_propensity: bool = False) -> None:
        self.lineno = lineno
        self.zero_propensity = zero_propensity
        super().__init__(f"line {lineno}: {message}" if lineno is not None else message)


class ProbVector(Mapping):
    """Read-only item -> probability mapping backed by an array.

    ``index`` maps item id to array position and may be shared between
    records drawn from the same pool.
    """

    __slots__ = ("_index", "_probs")

    def __init__(self, index: Mapping[Hashable, int], probs: Sequence[float]) -> None:
        self._index = index
        self._probs = np.asarray(probs, dtype=float)
        if len(self._index) != self._probs.size:
            raise ValueError("index and probabilities differ in length")

    def __getitem__(self, item: Hashable) -> float:
        return float(self._probs[self._index[item]])

    def __contains__(self, item: object) -> bool:
        return item in self._index

    def __iter__(self):
        return iter(self._index)

    def __len__(self) -> int:
        return self._probs.size

    def total(self) -> float:
        return float(np.sum(self._probs))


@dataclass(frozen=True)
class LogRecord:
    round: int
    context_id: Hashable
    chosen_items: tuple
    propensities: tuple
    rewards: tuple
    full_prob_vector: Mapping[Hashable, float] | None = None

    def __post_init__(self) -> None:
        for name in ("chosen_items", "propensities", "rewards"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        n = len(self.chosen_items)
        if n == 0 or len(self.propensities) != n or len(self.rewards) != n:
            raise ValueError("items, propensities and rewards must be nonempty and equal length")
        if self.round < 0:
            raise ValueError("round must be nonnegative")
        for p in self.propensities:
            if not (0.0 < p <= 1.0):
                raise ValueError(f"propensity {p!r} outside (0, 1]")
        for r in self.rewards:
            if r not in (0, 1):
                raise ValueError(f"reward {r!r} is not binary")
        if self.full_prob_vector is not None:
            pvec = self.full_prob_vector
            total = pvec.total() if isinstance(pvec, ProbVector) else math.fsum(pvec.values())
            if abs(total - 1.0) > PVEC_TOLERANCE:
                raise ValueError("full probability vector does not sum to 1")
            missing = [i for i in self.chosen_items if i not in pvec]
            if missing:
                raise ValueError(f"chosen items {missing} missing from probability vector")

    @property
    def slate_size(self) -> int:
        return len(self.chosen_items)


@dataclass(frozen=True)
class LogMetadata:
    experiment_id: str = ""
    seed: int | None = None
    config_digest: str = ""
    extra: dict = field(default_factory=dict)


@dataclass
class LogDataset:
    records: list[LogRecord] = field(default_factory=list)
    metadata: LogMetadata = field(default_factory=LogMetadata)

    def __post_init__(self) -> None:
        rounds = [r.round for r in self.records]
        if any(b <= a for a, b in zip(rounds, rounds[1:])):
            raise ValueError("record rounds must be strictly increasing")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def append(self, record: LogRecord) -> "LogDataset":
        if self.records and record.round <= self.records[-1].round:
            raise ValueError(
                f"out-of-order round {record.round}; last logged round is {self.records[-1].round}"
            )
        self.records.append(record)
        return self


def append(dataset: LogDataset, record: LogRecord) -> LogDataset:
    return dataset.append(record)


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def _record_to_obj(rec: LogRecord) -> dict:
    obj: dict[str, Any] = {
        "t": rec.round,
        "ctx": rec.context_id,
        "items": list(rec.chosen_items),
        "props": [float(p) for p in rec.propensities],
        "rewards": list(rec.rewards),
    }
    if rec.full_prob_vector is not None:
        obj["pvec"] = {str(k): float(v) for k, v in rec.full_prob_vector.items()}
    return obj


def _item_key(key: str) -> Hashable:
    # JSON object keys are strings; integer ids come back as ints
    try:
        return int(key)
    except ValueError:
        return key


def _obj_to_record(obj: Any, lineno: int) -> LogRecord:
    if not isinstance(obj, dict):
        raise LogFormatError("record is not a JSON object", lineno)
    missing = [k for k in FIELDS if k not in obj]
    if missing:
        raise LogFormatError(f"missing field(s) {', '.join(missing)}", lineno)
    props = obj["props"]
    if isinstance(props, list) and any(isinstance(p, (int, float)) and p <= 0 for p in props):
        raise LogFormatError(
            f"propensity {min(props)!r} is not positive; inverse propensity scoring requires every "
            "logged action to have been selected stochastically with probability > 0",
            lineno,
            zero_propensity=True,
        )
    pvec = obj.get("pvec")
    if pvec is not None:
        if not isinstance(pvec, dict):
            raise LogFormatError("pvec must be an object", lineno)
        items = obj["items"] if isinstance(obj["items"], list) else []
        # keys of chosen items keep the type they have in "items"
        known = {str(i): i for i in items if isinstance(i, (int, str))}
        pvec = {known[k] if k in known else _item_key(k): v for k, v in pvec.items()}
    try:
        return LogRecord(
            round=obj["t"],
            context_id=obj["ctx"],
            chosen_items=obj["items"],
            propensities=obj["props"],
            rewards=obj["rewards"],
            full_prob_vector=pvec,
        )
    except (TypeError, ValueError) as exc:
        raise LogFormatError(str(exc), lineno) from None


def dumps_record(rec: LogRecord) -> str:
    # repr-based float output is the shortest string that round-trips exactly
    return json.dumps(_record_to_obj(rec), separators=(",", ":"), allow_nan=False)


def metadata_to_obj(meta: LogMetadata) -> dict:
    return asdict(meta)


def metadata_from_obj(obj: Mapping) -> LogMetadata:
    known = {k: obj[k] for k in ("experiment_id", "seed", "config_digest", "extra") if k in obj}
    return LogMetadata(**known)


def serialize(dataset: LogDataset, header: bool = True) -> bytes:
    """UTF-8 JSON Lines; with ``header`` the first line is ``{"meta": ...}``."""
    lines = []
    if header:
        lines.append(json.dumps({"meta": metadata_to_obj(dataset.metadata)}, sort_keys=True))
    lines.extend(dumps_record(r) for r in dataset.records)
    return "".join(line + "\n" for line in lines).encode("utf-8")


def iter_records(lines: Iterable[str], start: int = 1):
    last = None
    for lineno, line in enumerate(lines, start=start):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LogFormatError(f"malformed JSON ({exc.msg})", lineno) from None
        rec = _obj_to_record(obj, lineno)
        if last is not None and rec.round <= last:
            raise LogFormatError(f"round {rec.round} does not follow round {last}", lineno)
        last = rec.round
        yield rec


def deserialize(data: bytes | str, metadata: LogMetadata | None = None) -> LogDataset:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    lines = text.splitlines()
    start = 1
    if lines:
        try:
            first = json.loads(lines[0])
        except json.JSONDecodeError:
            first = None
        if isinstance(first, dict) and set(first) == {"meta"}:
            metadata = metadata_from_obj(first["meta"])
            lines = lines[1:]
            start = 2
    records = list(iter_records(lines, start=start))
    return LogDataset(records, metadata or LogMetadata())


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def meta_path(log_path: str | Path) -> Path:
    p = Path(log_path)
    return p.with_name(p.name.removesuffix(".jsonl") + ".meta.json")


def write_log(dataset: LogDataset, path: str | Path) -> Path:
    """Write ``path`` (records) and its ``.meta.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(serialize(dataset, header=False))
    meta_path(path).write_text(
        json.dumps(metadata_to_obj(dataset.metadata), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return path


def read_log(path: str | Path) -> LogDataset:
    path = Path(path)
    mpath = meta_path(path)
    metadata = None
    if mpath.exists():
        metadata = metadata_from_obj(json.loads(mpath.read_text(encoding="utf-8")))
    return deserialize(path.read_bytes(), metadata)
