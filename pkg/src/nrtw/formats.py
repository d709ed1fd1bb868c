"""NRTW-IMG v1 and NRTW-CKPT v1 container formats.

Both formats share a layout: an ASCII magic line, one canonical-JSON header
line, then a raw little-endian float32 payload. Canonical JSON (sorted keys,
no whitespace) makes write -> read -> write byte-identical.
"""

from __future__ import annotations

import json
import hashlib
import io
from typing import Any

import numpy as np

from .errors import FormatError
from .simulate import as_image

IMG_MAGIC = b"NRTW-IMG v1\n"
CKPT_MAGIC = b"NRTW-CKPT v1\n"


def _canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _split_container(data: bytes, magic: bytes, what: str) -> tuple[dict, bytes]:
    if not data.startswith(magic):
        raise FormatError(f"not a {what} container (bad magic)")
    rest = data[len(magic):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise FormatError(f"{what} header line is unterminated")
    try:
        header = json.loads(rest[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{what} header is not valid JSON: {exc}") from exc
    return header, rest[nl + 1:]


# ---------------------------------------------------------------------------
# images


def image_to_bytes(image: np.ndarray, meta: dict | None = None) -> bytes:
    image = as_image(image)
    header = {
        "dtype": "<f4",
        "shape": [int(image.shape[0]), int(image.shape[1])],
        "units": "HU",
        "meta": meta or {},
    }
    payload = np.ascontiguousarray(image, dtype="<f4").tobytes()
    return IMG_MAGIC + _canonical_json(header) + b"\n" + payload


def image_from_bytes(data: bytes) -> tuple[np.ndarray, dict]:
    header, payload = _split_container(data, IMG_MAGIC, "NRTW-IMG")
    if header.get("dtype") != "<f4":
        raise FormatError(f"unsupported image dtype {header.get('dtype')!r}")
    shape = tuple(int(v) for v in header.get("shape", ()))
    if len(shape) != 2:
        raise FormatError(f"image shape must be 2-d, got {shape}")
    expected = shape[0] * shape[1] * 4
    if len(payload) != expected:
        raise FormatError(
            f"image payload is {len(payload)} bytes, expected {expected}"
        )
    image = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    return image, header.get("meta", {})


def write_image(path, image: np.ndarray, meta: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(image_to_bytes(image, meta))


def read_image(path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        return image_from_bytes(fh.read())


# ---------------------------------------------------------------------------
# checkpoints


def checkpoint_to_bytes(
    config: dict, params: dict[str, np.ndarray], seed: int, meta: dict | None = None
) -> bytes:
    entries = []
    chunks = []
    for name, arr in params.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape)})
        chunks.append(arr.tobytes())
    header = {
        "config": config,
        "params": entries,
        "seed": int(seed),
        "meta": meta or {},
    }
    return CKPT_MAGIC + _canonical_json(header) + b"\n" + b"".join(chunks)


def checkpoint_from_bytes(
    data: bytes,
) -> tuple[dict, dict[str, np.ndarray], int, dict]:
    header, payload = _split_container(data, CKPT_MAGIC, "NRTW-CKPT")
    params: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header.get("params", []):
        name = entry["name"]
        shape = tuple(int(v) for v in entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        if offset + nbytes > len(payload):
            raise FormatError(f"checkpoint payload truncated at parameter {name!r}")
        arr = (
            np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
            .reshape(shape)
            .copy()
        )
        if name in params:
            raise FormatError(f"duplicate parameter name {name!r} in checkpoint")
        params[name] = arr
        offset += nbytes
    if offset != len(payload):
        raise FormatError(
            f"checkpoint payload has {len(payload) - offset} trailing bytes"
        )
    return header["config"], params, int(header.get("seed", 0)), header.get("meta", {})


# ---------------------------------------------------------------------------
# display export


def to_png_bytes(gray8: np.ndarray) -> bytes:
    from PIL import Image as PILImage

    if gray8.dtype != np.uint8 or gray8.ndim != 2:
        raise FormatError("PNG export expects an 8-bit 2-d grayscale array")
    buf = io.BytesIO()
    PILImage.fromarray(gray8, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
