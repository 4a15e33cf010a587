"""Binary containers and image export.

Every container is laid out as::

    magic (8 ASCII bytes) | header length (uint32 LE) | JSON header | payload

Payload blocks are raw little-endian arrays whose sizes are fully determined
by the header, so readers can validate the byte count before decoding.
"""

import json
import os
import struct

import numpy as np

from .errors import BadMagic, ChannelOutOfRange, FormatError, HeaderMismatch, MissingFile

FEATURE_MAP_MAGIC = b"GSFM0001"

_LEN = struct.Struct("<I")
_MAX_HEADER = 1 << 20


def write_container(path, magic, header, blocks):
    """Write ``blocks`` (bytes-like) after a length-prefixed JSON header."""
    payload = b"".join(bytes(b) for b in blocks)
    header = dict(header, payload_bytes=len(payload))
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(_LEN.pack(len(raw)))
        fh.write(raw)
        fh.write(payload)


def read_container(path, magic):
    """Return ``(header, payload)`` after checking magic and payload length."""
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MissingFile(f"no such file: {path}")
    with open(path, "rb") as fh:
        data = fh.read()
    return decode_container(data, magic)


def decode_container(data, magic):
    if len(data) < len(magic) or data[: len(magic)] != magic:
        found = bytes(data[: len(magic)])
        raise BadMagic(f"expected magic {magic!r}, found {found!r}")
    pos = len(magic)
    if len(data) < pos + _LEN.size:
        raise HeaderMismatch("file ends before header length")
    (hlen,) = _LEN.unpack_from(data, pos)
    pos += _LEN.size
    if hlen > _MAX_HEADER or len(data) < pos + hlen:
        raise HeaderMismatch(f"header length {hlen} exceeds file size {len(data)}")
    try:
        header = json.loads(data[pos : pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderMismatch(f"header is not valid JSON: {exc}") from None
    if not isinstance(header, dict):
        raise HeaderMismatch("header must be a JSON object")
    payload = data[pos + hlen :]
    declared = header.get("payload_bytes")
    if declared is not None and declared != len(payload):
        raise HeaderMismatch(
            f"payload_bytes: header declares {declared!r} bytes, file has {len(payload)}"
        )
    return header, payload


def header_int(header, key, minimum=0):
    value = header.get(key)
    # bool is an int subclass; reject it explicitly
    if not isinstance(value, int) or isinstance(value, bool):
        raise HeaderMismatch(f"{key}: expected integer, found {value!r}")
    if value < minimum:
        raise HeaderMismatch(f"{key}: must be >= {minimum}, found {value}")
    return value


def check_payload_size(payload, expected):
    if len(payload) != expected:
        raise HeaderMismatch(f"payload: expected {expected} bytes, found {len(payload)}")


def split_blocks(payload, specs):
    """Slice ``payload`` into arrays. ``specs`` is a list of (dtype, shape)."""
    arrays = []
    pos = 0
    for dtype, shape in specs:
        dt = np.dtype(dtype)
        n = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        arrays.append(np.frombuffer(payload[pos : pos + n], dtype=dt).reshape(shape).copy())
        pos += n
    return arrays


def write_feature_map(fmap, path):
    h, w, c = fmap.values.shape
    planes = np.ascontiguousarray(np.moveaxis(fmap.values, 2, 0), dtype="<f4")
    alpha = np.ascontiguousarray(fmap.alpha, dtype="<f4")
    write_container(
        path,
        FEATURE_MAP_MAGIC,
        {"width": w, "height": h, "channels": c},
        [planes.tobytes(), alpha.tobytes()],
    )


def read_feature_map(path):
    from .splat import FeatureMap

    header, payload = read_container(path, FEATURE_MAP_MAGIC)
    w = header_int(header, "width", 1)
    h = header_int(header, "height", 1)
    c = header_int(header, "channels", 1)
    check_payload_size(payload, 4 * h * w * (c + 1))
    planes, alpha = split_blocks(payload, [("<f4", (c, h, w)), ("<f4", (h, w))])
    values = np.ascontiguousarray(np.moveaxis(planes, 0, 2)).astype(np.float32)
    return FeatureMap(values=values, alpha=alpha.astype(np.float32))


def channel_to_u8(values):
    """Map feature values in [-1, 1] to 0..255, rounding halves away from zero."""
    x = (np.clip(np.asarray(values, dtype=np.float64), -1.0, 1.0) + 1.0) / 2.0 * 255.0
    # x >= 0, so half-away-from-zero is floor(x + 0.5)
    return np.floor(x + 0.5).astype(np.uint8)


def export_channel_image(fmap, channel, path):
    from PIL import Image

    if not 0 <= channel < fmap.channels:
        raise ChannelOutOfRange(f"channel {channel} out of range for {fmap.channels} channels")
    # 2-D uint8 arrays map to 8-bit grayscale
    Image.fromarray(channel_to_u8(fmap.values[:, :, channel])).save(path)
    return path


__all__ = [
    "FormatError",
    "read_container",
    "write_container",
    "read_feature_map",
    "write_feature_map",
    "export_channel_image",
    "channel_to_u8",
]
