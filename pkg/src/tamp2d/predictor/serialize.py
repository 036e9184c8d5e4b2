"""Binary model files.

Layout: ``b"PIGI"``, u16 version, u32 header length, a UTF-8 JSON header
(config plus an ordered shape manifest), then each parameter block as
little-endian float64 in manifest order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .model import Model, ModelConfig, param_shapes

MAGIC = b"PIGI"
VERSION = 1


class ModelFileError(ValueError):
    pass


class CorruptModelError(ModelFileError):
    pass


class VersionMismatchError(ModelFileError):
    pass


def dumps_model(model: Model, extra: dict | None = None) -> bytes:
    manifest = [[k, list(v.shape)] for k, v in model.params.items()]
    header = {"config": model.config_dict(), "params": manifest, "extra": extra or {}}
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<HI", VERSION, len(hb)), hb]
    for k, _ in manifest:
        parts.append(np.ascontiguousarray(model.params[k], dtype="<f8").tobytes())
    return b"".join(parts)


def loads_model(data: bytes) -> tuple[Model, dict]:
    if len(data) < 10 or data[:4] != MAGIC:
        raise CorruptModelError("not a model file (bad magic)")
    version, hlen = struct.unpack("<HI", data[4:10])
    if version != VERSION:
        raise VersionMismatchError(f"model file version {version}, expected {VERSION}")
    if len(data) < 10 + hlen:
        raise CorruptModelError("truncated header")
    try:
        header = json.loads(data[10:10 + hlen].decode("utf-8"))
        cfg = ModelConfig(**header["config"])
        manifest = header["params"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptModelError(f"bad header: {exc}") from None
    expected = {k: list(s) for k, s in param_shapes(cfg).items()}
    if {k: list(s) for k, s in manifest} != expected:
        raise CorruptModelError("parameter manifest does not match the config")
    pos = 10 + hlen
    params = {}
    for k, shape in manifest:
        n = int(np.prod(shape)) if shape else 1
        end = pos + 8 * n
        if end > len(data):
            raise CorruptModelError(f"truncated block {k}")
        params[k] = np.frombuffer(data[pos:end], dtype="<f8").astype(float).reshape(shape)
        pos = end
    if pos != len(data):
        raise CorruptModelError("trailing bytes after the last block")
    return Model(cfg, params), header.get("extra", {})


def save_model(model: Model, path, extra: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_model(model, extra))


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        return loads_model(fh.read())[0]


def load_model_with_extra(path) -> tuple[Model, dict]:
    with open(path, "rb") as fh:
        return loads_model(fh.read())
