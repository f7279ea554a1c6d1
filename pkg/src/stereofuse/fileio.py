"""Bit-exact readers/writers: PFM disparity maps, PGM/PNG images, JSON reports.

Disk convention for invalid disparities is +infinity (Middlebury); 0 is a
legal disparity and is never treated as missing.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ImageFormatError, ParameterError, PfmParseError, SchemaError
from .grid import ImageBuffer, ScalarField
from .metrics import EvalReport

REPORT_SCHEMA_VERSION = 1


@dataclass
class PfmHeader:
    bands: int       # 1 ("Pf") or 3 ("PF")
    width: int
    height: int
    scale: float     # sign encodes byte order; negative = little-endian

    def __post_init__(self):
        if self.bands not in (1, 3):
            raise ParameterError(f"PFM bands must be 1 or 3, got {self.bands}")
        if self.width < 1 or self.height < 1:
            raise ParameterError(f"PFM dims must be >= 1, got {self.width}x{self.height}")
        if self.scale == 0.0:
            raise ParameterError("PFM scale must be nonzero")


def _next_token(data: bytes, pos: int):
    """(token, start_offset, position after token); skips whitespace and # comments."""
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    if pos >= n:
        raise PfmParseError("unexpected end of header", pos)
    start = pos
    while pos < n and not data[pos:pos + 1].isspace():
        pos += 1
    return data[start:pos], start, pos


def parse_pfm_header(data: bytes):
    """(PfmHeader, payload offset) from the leading bytes of a PFM file."""
    magic, start, pos = _next_token(data, 0)
    if magic == b"Pf":
        bands = 1
    elif magic == b"PF":
        bands = 3
    else:
        raise PfmParseError(f"bad PFM magic {magic!r}", start)
    w_tok, w_off, pos = _next_token(data, pos)
    h_tok, h_off, pos = _next_token(data, pos)
    s_tok, s_off, pos = _next_token(data, pos)
    try:
        width = int(w_tok)
    except ValueError:
        raise PfmParseError(f"bad width token {w_tok!r}", w_off) from None
    try:
        height = int(h_tok)
    except ValueError:
        raise PfmParseError(f"bad height token {h_tok!r}", h_off) from None
    try:
        scale = float(s_tok)
    except ValueError:
        raise PfmParseError(f"bad scale token {s_tok!r}", s_off) from None
    if width < 1 or height < 1:
        raise PfmParseError(f"bad dimensions {width}x{height}", w_off)
    if scale == 0.0:
        raise PfmParseError("scale must be nonzero", s_off)
    if pos >= len(data):
        raise PfmParseError("missing whitespace after scale", pos)
    # exactly one whitespace byte separates the header from the payload
    return PfmHeader(bands, width, height, scale), pos + 1


def read_pfm(data: bytes) -> ScalarField:
    """Decode a PFM file; rows come back top-to-bottom, +inf becomes invalid.

    Three-band files are reduced to one band by averaging (gray encoded as
    color round-trips exactly); the magnitude of ``scale`` is ignored.
    """
    header, offset = parse_pfm_header(data)
    count = header.width * header.height * header.bands
    need = count * 4
    if len(data) - offset < need:
        raise PfmParseError(
            f"payload truncated: need {need} bytes, have {len(data) - offset}",
            len(data),
        )
    dtype = "<f4" if header.scale < 0 else ">f4"
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=offset).astype(np.float32)
    if header.bands == 3:
        raw = raw.reshape(header.height, header.width, 3)
        values = (raw.astype(np.float64).sum(axis=2) / 3.0).astype(np.float32)
    else:
        values = raw.reshape(header.height, header.width)
    values = values[::-1].copy()            # file stores rows bottom-to-top
    valid = np.isfinite(values)
    values = values.copy()
    values[~valid] = 0.0
    return ScalarField(values, valid)


def write_pfm(field: ScalarField) -> bytes:
    """Encode a field as little-endian grayscale PFM; invalid pixels become +inf."""
    values = field.data.astype(np.float32).copy()
    values[~field.valid] = np.inf
    header = f"Pf\n{field.width} {field.height}\n-1.0\n".encode("ascii")
    payload = values[::-1].astype("<f4").tobytes()
    return header + payload


_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _check_png_header(data: bytes):
    if len(data) < 33 or data[:8] != _PNG_SIGNATURE:
        raise ImageFormatError("not a PNG file")
    if data[12:16] != b"IHDR":
        raise ImageFormatError("PNG missing IHDR chunk")
    bit_depth = data[24]
    color_type = data[25]
    interlace = data[28]
    if interlace != 0:
        raise ImageFormatError("interlaced PNG is not supported")
    if color_type not in (0, 2):
        raise ImageFormatError(
            f"PNG color type {color_type} not supported (grayscale/RGB only)"
        )
    if bit_depth not in (8, 16):
        raise ImageFormatError(f"PNG bit depth {bit_depth} not supported")
    if color_type == 2 and bit_depth == 16:
        raise ImageFormatError("16-bit RGB PNG is not supported")


def _read_png(data: bytes) -> ImageBuffer:
    _check_png_header(data)
    img = Image.open(io.BytesIO(data))
    arr = np.asarray(img)
    if arr.dtype == np.uint8:
        out = arr.astype(np.float32) / 255.0
    elif arr.dtype in (np.uint16, np.int32):
        out = arr.astype(np.float32) / 65535.0
    else:
        raise ImageFormatError(f"unsupported PNG sample type {arr.dtype}")
    return ImageBuffer(out)


def _read_pgm(data: bytes) -> ImageBuffer:
    try:
        magic, start, pos = _next_token(data, 0)
    except PfmParseError as exc:
        raise ImageFormatError(f"truncated PGM header: {exc}") from None
    if magic != b"P5":
        raise ImageFormatError(f"bad PGM magic {magic!r} (binary P5 only)")
    try:
        w_tok, _, pos = _next_token(data, pos)
        h_tok, _, pos = _next_token(data, pos)
        m_tok, _, pos = _next_token(data, pos)
        width, height, maxval = int(w_tok), int(h_tok), int(m_tok)
    except (PfmParseError, ValueError):
        raise ImageFormatError("malformed PGM header") from None
    if width < 1 or height < 1:
        raise ImageFormatError(f"bad PGM dimensions {width}x{height}")
    if not (0 < maxval < 65536):
        raise ImageFormatError(f"bad PGM maxval {maxval}")
    offset = pos + 1  # single whitespace byte after maxval
    if maxval < 256:
        count = width * height
        if len(data) - offset < count:
            raise ImageFormatError("PGM payload truncated")
        samples = np.frombuffer(data, dtype=np.uint8, count=count, offset=offset)
        out = samples.astype(np.float32) / 255.0
    else:
        count = width * height
        if len(data) - offset < 2 * count:
            raise ImageFormatError("PGM payload truncated")
        samples = np.frombuffer(data, dtype=">u2", count=count, offset=offset)
        out = samples.astype(np.float32) / 65535.0
    return ImageBuffer(out.reshape(height, width))


def read_image(data: bytes, fmt: str) -> ImageBuffer:
    """Decode a PGM (binary P5) or PNG (non-interlaced gray/RGB) image."""
    if fmt == "pgm":
        return _read_pgm(data)
    if fmt == "png":
        return _read_png(data)
    raise ImageFormatError(f"unsupported image format '{fmt}'")


def write_png(image: ImageBuffer) -> bytes:
    """Encode an image as 8-bit PNG (grayscale or RGB)."""
    arr = np.clip(np.rint(image.data * 255.0), 0, 255).astype(np.uint8)
    if arr.shape[2] == 1:
        pil = Image.fromarray(arr[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(arr, mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def _round_floats(obj):
    """Numbers rounded to 6 significant digits, recursively."""
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, float):
        if not np.isfinite(obj):
            raise SchemaError(f"non-finite number {obj} in report")
        return float(f"{obj:.6g}")
    if isinstance(obj, (int, str)) or obj is None:
        return obj
    if isinstance(obj, dict):
        return {str(k): _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return _round_floats(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    raise SchemaError(f"cannot serialize value of type {type(obj).__name__}")


def write_report(report: EvalReport) -> bytes:
    """Serialize a report as deterministic JSON (sorted keys, 6 sig. digits)."""
    doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "metrics": _round_floats(report.metrics),
        "counts": {str(k): int(v) for k, v in report.counts.items()},
    }
    if report.stats:
        doc["stats"] = _round_floats(report.stats)
    if report.extra:
        doc["extra"] = _round_floats(report.extra)
    text = json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=True)
    return (text + "\n").encode("ascii")


def read_report(data: bytes) -> EvalReport:
    doc = json.loads(data.decode("utf-8"))
    if doc.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise SchemaError(f"unknown report schema version {doc.get('schema_version')}")
    return EvalReport(
        metrics=doc.get("metrics", {}),
        counts=doc.get("counts", {}),
        stats=doc.get("stats", {}),
        extra=doc.get("extra", {}),
    )
