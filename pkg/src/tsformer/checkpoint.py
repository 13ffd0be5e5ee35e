"""Binary checkpoint format.

Layout, all integers little-endian::

    b"TSF1"
    u32 config_len, config_len bytes of UTF-8 JSON (the ModelConfig)
    u32 record_count
    per record:
        u16 name_len, name bytes (UTF-8)
        u8  ndim, ndim x u32 dims
        prod(dims) x float32 values
    u64 checksum  (BLAKE2b, 8-byte digest, over every preceding byte)
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .model import ModelConfig, TSFormer

MAGIC = b"TSF1"


class CheckpointError(Exception):
    """Base class for checkpoint load failures."""


class ChecksumError(CheckpointError):
    pass


class FormatError(CheckpointError):
    pass


class ConfigMismatchError(CheckpointError):
    def __init__(self, field: str, expected, found):
        super().__init__(f"config field {field!r} differs: expected {expected!r}, checkpoint has {found!r}")
        self.field = field


def _checksum(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=8).digest()


def serialize(model: TSFormer) -> bytes:
    parts = [MAGIC]
    cfg = json.dumps(model.cfg.to_dict(), sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(cfg)))
    parts.append(cfg)
    named = list(model.named_parameters())
    parts.append(struct.pack("<I", len(named)))
    for name, p in named:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", p.data.ndim))
        parts.append(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
        parts.append(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    payload = b"".join(parts)
    return payload + _checksum(payload)


def checkpoint_save(model: TSFormer, path) -> None:
    Path(path).write_bytes(serialize(model))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError("checkpoint truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _flatten(d: dict, prefix: str = "") -> dict:
    flat = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, key + "."))
        else:
            flat[key] = v
    return flat


def check_config(expected: ModelConfig, found: ModelConfig) -> None:
    e, f = _flatten(expected.to_dict()), _flatten(found.to_dict())
    for key in sorted(set(e) | set(f)):
        if e.get(key) != f.get(key):
            raise ConfigMismatchError(key, e.get(key), f.get(key))


def deserialize(buf: bytes, expected_config: ModelConfig | None = None) -> TSFormer:
    if len(buf) < len(MAGIC) or buf[:len(MAGIC)] != MAGIC:
        raise FormatError("unknown magic; not a TSF1 checkpoint")
    if len(buf) < len(MAGIC) + 8:
        raise FormatError("checkpoint truncated")
    payload, stored = buf[:-8], buf[-8:]
    if _checksum(payload) != stored:
        raise ChecksumError("checkpoint checksum mismatch; file is corrupt")
    r = _Reader(payload)
    r.take(len(MAGIC))
    (cfg_len,) = r.unpack("<I")
    try:
        cfg = ModelConfig.from_dict(json.loads(r.take(cfg_len).decode("utf-8")))
    except (ValueError, TypeError) as exc:
        raise FormatError(f"bad config block: {exc}") from exc
    if expected_config is not None:
        check_config(expected_config, cfg)
    model = TSFormer(cfg)
    params = dict(model.named_parameters())
    (count,) = r.unpack("<I")
    if count != len(params):
        raise FormatError(f"checkpoint has {count} parameters, model expects {len(params)}")
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        n = int(np.prod(shape)) if ndim else 1
        values = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(shape)
        if name not in params:
            raise FormatError(f"unexpected parameter {name!r}")
        p = params[name]
        if p.data.shape != tuple(shape):
            raise FormatError(f"parameter {name!r} has shape {tuple(shape)}, expected {p.data.shape}")
        p.data = values.astype(np.float32)
    if r.pos != len(payload):
        raise FormatError("trailing bytes after parameter records")
    return model


def checkpoint_load(path, expected_config: ModelConfig | None = None) -> TSFormer:
    return deserialize(Path(path).read_bytes(), expected_config)
