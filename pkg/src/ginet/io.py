"""Binary file formats: netpbm images and the model checkpoint.

Checkpoint layout (all integers little-endian)::

    b"GINT"                         magic
    u32 version                     currently 1
    u32 F, then F x i64             model config fields, in CONFIG_FIELDS order
    repeated until EOF:
        u32 len, name (utf-8)
        u32 rows, u32 cols
        rows*cols float32           row-major

Vectors are stored as 1 x n matrices.
"""
from __future__ import annotations

import struct

import numpy as np

MAGIC = b"GINT"
VERSION = 1
CONFIG_FIELDS = ("nodes", "node_dim", "channels", "embed_dim", "classes",
                 "width1", "width2", "width3", "stride", "mode")
MODE_IDS = {"ginet": 0, "visg": 1, "baseline": 2}


class CheckpointError(ValueError):
    pass


def write_ppm(path, image):
    """Binary P6 from an (H, W, 3) float image in [0, 1]."""
    data = np.clip(np.round(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    h, w = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(data).tobytes())


def write_pgm(path, gray):
    """Binary P5 from an (H, W) uint8 array."""
    data = np.ascontiguousarray(gray, dtype=np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(data.tobytes())


def read_netpbm(path):
    """Read a binary P5/P6 file with maxval 255; returns a uint8 array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255 or magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: unsupported netpbm header {magic!r} maxval={maxval}")
    channels = 3 if magic == b"P6" else 1
    body = np.frombuffer(raw[pos + 1:pos + 1 + w * h * channels], dtype=np.uint8)
    return body.reshape((h, w, 3) if channels == 3 else (h, w))


def save_checkpoint(path, cfg, params, extras=None):
    """Write ``params`` (then ``extras``) in their dict order."""
    out = bytearray(MAGIC)
    out += struct.pack("<I", VERSION)
    values = [MODE_IDS[cfg.mode] if f == "mode" else getattr(cfg, f) for f in CONFIG_FIELDS]
    out += struct.pack("<I", len(values))
    out += struct.pack(f"<{len(values)}q", *values)
    for name, arr in list(params.items()) + list((extras or {}).items()):
        a = np.asarray(arr)
        mat = a.reshape(1, -1) if a.ndim == 1 else a
        if mat.ndim != 2:
            raise CheckpointError(f"{name}: only 1-D or 2-D arrays can be stored")
        encoded = name.encode("utf-8")
        out += struct.pack("<I", len(encoded)) + encoded
        out += struct.pack("<II", *mat.shape)
        out += np.ascontiguousarray(mat, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(out))


def load_checkpoint(path):
    """Returns ``(cfg, params, extras)``.

    Entries named in the config's parameter table go to ``params`` (with
    their native shapes); everything else lands in ``extras``.
    """
    from ginet.model import GINetConfig, param_shapes

    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a GINet checkpoint (bad magic {raw[:4]!r})")
    try:
        (version,) = struct.unpack_from("<I", raw, 4)
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        (nfields,) = struct.unpack_from("<I", raw, 8)
        if nfields != len(CONFIG_FIELDS):
            raise CheckpointError(f"{path}: expected {len(CONFIG_FIELDS)} config fields, found {nfields}")
        values = struct.unpack_from(f"<{nfields}q", raw, 12)
        pos = 12 + 8 * nfields
        kw = dict(zip(CONFIG_FIELDS, values))
        modes = {v: k for k, v in MODE_IDS.items()}
        if kw["mode"] not in modes:
            raise CheckpointError(f"{path}: unknown mode id {kw['mode']}")
        kw["mode"] = modes[kw["mode"]]
        cfg = GINetConfig(**kw)
        shapes = param_shapes(cfg)
        params, extras = {}, {}
        while pos < len(raw):
            (n,) = struct.unpack_from("<I", raw, pos)
            name = raw[pos + 4:pos + 4 + n].decode("utf-8")
            pos += 4 + n
            rows, cols = struct.unpack_from("<II", raw, pos)
            pos += 8
            nbytes = 4 * rows * cols
            if pos + nbytes > len(raw):
                raise CheckpointError(f"{path}: truncated data for {name!r}")
            mat = np.frombuffer(raw, dtype="<f4", count=rows * cols, offset=pos).astype(np.float32)
            pos += nbytes
            if name in shapes:
                shape = shapes[name][0]
                if int(np.prod(shape)) != rows * cols:
                    raise CheckpointError(f"{path}: {name!r} is {rows}x{cols}, config expects {shape}")
                params[name] = mat.reshape(shape)
            else:
                extras[name] = mat.reshape(rows, cols)
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated checkpoint ({exc})") from None
    missing = [k for k in shapes if k not in params]
    if missing:
        raise CheckpointError(f"{path}: missing parameters {missing}")
    return cfg, params, extras
