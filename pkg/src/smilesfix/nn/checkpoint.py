"""Binary checkpoint format.

Layout (all integers little-endian)::

    magic        8 bytes   b"SMFXCKPT"
    version      u32       currently 1
    header_len   u32
    header       UTF-8 JSON: {"kind", "config", "meta", "optimizer"}
    n_tensors    u32
    per tensor:
        name_len u16, name (UTF-8)
        dtype    u8   (0 = float32, 1 = float64, 2 = int64)
        ndim     u8, then ndim x u32 dims
        data     row-major little-endian values

Optimizer moments are stored as tensors named ``adam.m.<param>`` and
``adam.v.<param>``; the step counter and hyper-parameters go in the header.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np
import torch

from smilesfix.errors import CheckpointError

MAGIC = b"SMFXCKPT"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("int64"): 2}


def _pack_tensor(name: str, t: torch.Tensor) -> bytes:
    arr = t.detach().cpu().numpy()
    code = _CODES.get(arr.dtype)
    if code is None:
        raise CheckpointError(f"unsupported dtype {arr.dtype} for {name}")
    raw = name.encode("utf-8")
    head = struct.pack("<H", len(raw)) + raw + struct.pack("<BB", code, arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()


def save_checkpoint(path, kind: str, config: dict, tensors: dict[str, torch.Tensor],
                    meta: dict | None = None, optimizer: dict | None = None) -> None:
    """Write atomically (temp file then rename)."""
    named = dict(tensors)
    opt_header = None
    if optimizer is not None:
        names = list(tensors)
        for n, m, v in zip(names, optimizer["m"], optimizer["v"]):
            named[f"adam.m.{n}"] = m
            named[f"adam.v.{n}"] = v
        opt_header = {k: optimizer[k] for k in ("step", "lr", "betas", "eps")}
        opt_header["params"] = names
    header = json.dumps({"kind": kind, "config": config, "meta": meta or {}, "optimizer": opt_header},
                        sort_keys=True).encode("utf-8")
    body = [MAGIC, struct.pack("<II", VERSION, len(header)), header, struct.pack("<I", len(named))]
    body.extend(_pack_tensor(n, t) for n, t in named.items())
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(b"".join(body))
    os.replace(tmp, path)


def load_checkpoint(path) -> dict:
    """Returns {"kind", "config", "meta", "tensors", "optimizer"} (optimizer may be None)."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes")
    try:
        version, hlen = struct.unpack_from("<II", data, 8)
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        off = 16
        header = json.loads(data[off: off + hlen].decode("utf-8"))
        off += hlen
        (count,) = struct.unpack_from("<I", data, off)
        off += 4
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off: off + nlen].decode("utf-8")
            off += nlen
            code, ndim = struct.unpack_from("<BB", data, off)
            off += 2
            shape = struct.unpack_from(f"<{ndim}I", data, off)
            off += 4 * ndim
            dt = _DTYPES[code]
            n = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(data, dtype=dt, count=n, offset=off).reshape(shape).copy()
            off += n * dt.itemsize
            tensors[name] = torch.from_numpy(arr)
    except (struct.error, KeyError, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({exc})") from exc
    if off != len(data):
        raise CheckpointError(f"{path}: {len(data) - off} trailing bytes")
    opt = header.get("optimizer")
    optimizer = None
    if opt is not None:
        optimizer = dict(opt)
        optimizer["m"] = [tensors.pop(f"adam.m.{n}") for n in opt["params"]]
        optimizer["v"] = [tensors.pop(f"adam.v.{n}") for n in opt["params"]]
    return {"kind": header["kind"], "config": header["config"], "meta": header["meta"],
            "tensors": tensors, "optimizer": optimizer}
