"""Versioned binary checkpoint format.

Layout (all integers little-endian)::

    b"HWMN"  u32 version
    u32 n + utf-8 text   network config, one ``key=json`` per line
    u32 n + utf-8 text   train config (empty when absent)
    u64                  iteration
    u32 n + utf-8 text   RNG state (JSON)
    u32 count            parameters, each:
        u16 n + name, u8 ndim, u32 * ndim dims, float32 LE data
    u64                  optimizer step
    u32 count            optimizer slots (0 or one per parameter), each:
        u16 n + name, float32 LE first moment, float32 LE second moment
"""
from __future__ import annotations

import io
import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointIOError, UnsupportedCheckpoint

MAGIC = b"HWMN"
VERSION = 1
_F32 = np.dtype("<f4")


@dataclass
class OptimizerState:
    step: int = 0
    m: OrderedDict = field(default_factory=OrderedDict)
    v: OrderedDict = field(default_factory=OrderedDict)


@dataclass
class Checkpoint:
    network: dict
    params: OrderedDict
    iteration: int = 0
    train: dict | None = None
    rng: dict = field(default_factory=dict)
    optimizer: OptimizerState | None = None

    def param_count(self) -> int:
        return sum(a.size for a in self.params.values())


def _flatten(d: dict, prefix: str = "") -> list[str]:
    lines = []
    for k, v in d.items():
        if isinstance(v, dict):
            lines += _flatten(v, f"{prefix}{k}.")
        else:
            lines.append(f"{prefix}{k}={json.dumps(v)}")
    return lines


def encode_kv(d: dict | None) -> str:
    return "" if d is None else "\n".join(_flatten(d)) + "\n"


def decode_kv(text: str) -> dict | None:
    if not text:
        return None
    out: dict = {}
    for line in text.splitlines():
        if not line:
            continue
        key, _, raw = line.partition("=")
        node = out
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = json.loads(raw)
    return out


class _Writer:
    def __init__(self):
        self.buf = io.BytesIO()

    def u(self, fmt: str, v: int):
        self.buf.write(struct.pack("<" + fmt, v))

    def text(self, s: str, fmt: str = "I"):
        b = s.encode("utf-8")
        self.u(fmt, len(b))
        self.buf.write(b)

    def array(self, a: np.ndarray):
        self.buf.write(np.ascontiguousarray(a, dtype=_F32).tobytes())


class _Reader:
    def __init__(self, data: bytes, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointIOError(f"{self.path}: truncated checkpoint (wanted {n} bytes at offset {self.pos})")
        b = self.data[self.pos:self.pos + n]
        self.pos += n
        return b

    def u(self, fmt: str) -> int:
        return struct.unpack("<" + fmt, self.take(struct.calcsize(fmt)))[0]

    def text(self, fmt: str = "I") -> str:
        return self.take(self.u(fmt)).decode("utf-8")

    def array(self, shape) -> np.ndarray:
        n = int(np.prod(shape, dtype=np.int64))
        return np.frombuffer(self.take(4 * n), dtype=_F32).astype(np.float32).reshape(shape)


def encode(ck: Checkpoint) -> bytes:
    w = _Writer()
    w.buf.write(MAGIC)
    w.u("I", VERSION)
    w.text(encode_kv(ck.network))
    w.text(encode_kv(ck.train))
    w.u("Q", ck.iteration)
    w.text(json.dumps(ck.rng, sort_keys=True))
    w.u("I", len(ck.params))
    for name, a in ck.params.items():
        w.text(name, "H")
        w.u("B", a.ndim)
        for d in a.shape:
            w.u("I", d)
        w.array(a)
    opt = ck.optimizer
    w.u("Q", opt.step if opt else 0)
    w.u("I", len(opt.m) if opt else 0)
    if opt:
        for name in opt.m:
            w.text(name, "H")
            w.array(opt.m[name])
            w.array(opt.v[name])
    return w.buf.getvalue()


def decode(data: bytes, path="<bytes>") -> Checkpoint:
    r = _Reader(data, path)
    if r.take(4) != MAGIC:
        raise UnsupportedCheckpoint(f"{path}: bad magic, not an HWMN checkpoint")
    version = r.u("I")
    if version != VERSION:
        raise UnsupportedCheckpoint(f"{path}: format version {version}, this build reads {VERSION}")
    network = decode_kv(r.text()) or {}
    train = decode_kv(r.text())
    iteration = r.u("Q")
    rng = json.loads(r.text())
    params = OrderedDict()
    for _ in range(r.u("I")):
        name = r.text("H")
        shape = tuple(r.u("I") for _ in range(r.u("B")))
        params[name] = r.array(shape)
    step = r.u("Q")
    opt = OptimizerState(step=step)
    for _ in range(r.u("I")):
        name = r.text("H")
        if name not in params:
            raise UnsupportedCheckpoint(f"{path}: optimizer slot for unknown parameter {name!r}")
        opt.m[name] = r.array(params[name].shape)
        opt.v[name] = r.array(params[name].shape)
    if r.pos != len(data):
        raise UnsupportedCheckpoint(f"{path}: {len(data) - r.pos} trailing bytes")
    return Checkpoint(network, params, iteration, train, rng, opt if (opt.m or step) else None)


def save_checkpoint(path, ck: Checkpoint) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode(ck))
    except OSError as exc:
        raise CheckpointIOError(f"{path}: cannot write checkpoint ({exc})") from exc


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointIOError(f"{path}: cannot read checkpoint ({exc})") from exc
    return decode(data, path)
