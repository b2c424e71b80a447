"""Binary checkpoint format.

Layout (little-endian)::

    b"APTCKPT1" | u32 version | 32-byte network spec sha256 | u32 count
    count x ( u16 name_len | name utf-8 | u8 ndim | ndim x u32 | float32 data )
"""
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"APTCKPT1"
VERSION = 1


def dumps(arrays, spec_hash=b"\0" * 32):
    if len(spec_hash) != 32:
        raise ValueError("spec hash must be 32 bytes")
    out = [MAGIC, struct.pack("<I", VERSION), spec_hash, struct.pack("<I", len(arrays))]
    for name, a in sorted(arrays.items()):
        a = np.asarray(a, dtype="<f4")
        nb = name.encode()
        out.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", a.ndim))
        out.append(struct.pack(f"<{a.ndim}I", *a.shape))
        out.append(a.tobytes(order="C"))
    return b"".join(out)


def loads(blob):
    """Return ``(spec_hash, {name: float32 array})``."""
    if blob[:8] != MAGIC:
        raise FormatError(f"bad checkpoint magic {blob[:8]!r}")
    try:
        (version,) = struct.unpack_from("<I", blob, 8)
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        spec_hash = blob[12:44]
        (count,) = struct.unpack_from("<I", blob, 44)
        pos, arrays = 48, {}
        for _ in range(count):
            (nl,) = struct.unpack_from("<H", blob, pos)
            name = blob[pos + 2:pos + 2 + nl].decode()
            pos += 2 + nl
            (ndim,) = struct.unpack_from("<B", blob, pos)
            shape = struct.unpack_from(f"<{ndim}I", blob, pos + 1)
            pos += 1 + 4 * ndim
            n = int(np.prod(shape)) if ndim else 1
            if pos + 4 * n > len(blob):
                raise FormatError("truncated checkpoint")
            arrays[name] = np.frombuffer(blob, dtype="<f4", count=n, offset=pos).reshape(shape).copy()
            pos += 4 * n
    except struct.error as e:
        raise FormatError(f"truncated checkpoint: {e}") from None
    return spec_hash, arrays


def save_network(path, net):
    with open(path, "wb") as f:
        f.write(dumps(net.state_dict(), net.spec_hash()))


def load_network(path, net, strict=True):
    with open(path, "rb") as f:
        spec_hash, arrays = loads(f.read())
    if strict and spec_hash != net.spec_hash():
        raise FormatError(f"checkpoint {path} was written for a different network spec")
    net.load_state_dict(arrays)
    return net
