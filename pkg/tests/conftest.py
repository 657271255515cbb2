"""Shared fixtures: taxonomies, mask builders, synthetic datasets, and a
minimal independent PNG codec used as the raster round-trip oracle."""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np
import pytest

from affbench import (
    ClassTaxonomy,
    LabelMask,
    RgbImage,
    builtin_taxonomy,
    save_image,
    save_label_mask,
)


@pytest.fixture(scope="session")
def umd() -> ClassTaxonomy:
    return builtin_taxonomy("umd")


@pytest.fixture(scope="session")
def choc() -> ClassTaxonomy:
    return builtin_taxonomy("choc_aff")


def mask_of(labels, taxonomy) -> LabelMask:
    return LabelMask(np.asarray(labels, dtype=np.uint8), taxonomy)


def random_blob(rng, height=480, width=640, min_pixels=1000) -> np.ndarray:
    """Elliptical object mask with at least min_pixels set."""
    yy, xx = np.mgrid[0:height, 0:width]
    while True:
        cy = rng.uniform(0.3 * height, 0.7 * height)
        cx = rng.uniform(0.3 * width, 0.7 * width)
        ry = rng.uniform(0.08 * height, 0.28 * height)
        rx = rng.uniform(0.08 * width, 0.28 * width)
        blob = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 < 1.0
        if blob.sum() >= min_pixels:
            return blob


def write_dataset(
    root: Path,
    taxonomy: ClassTaxonomy,
    pairs,
    model_id: str = "m",
    with_images: bool = False,
) -> Path:
    """Write masks (and optional images) plus a manifest; returns its path.

    pairs: list of (gt_labels, pred_labels) arrays.
    """
    root.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, (gt, pred) in enumerate(pairs):
        sid = f"img_{i}"
        ann = f"ann_{i}.png"
        prd = f"pred_{i}.png"
        save_label_mask(mask_of(gt, taxonomy), root / ann)
        save_label_mask(mask_of(pred, taxonomy), root / prd)
        record = {
            "id": sid,
            "annotation": ann,
            "predictions": {model_id: prd},
            "split": "test",
        }
        if with_images:
            img = f"img_{i}.png"
            h, w = np.asarray(gt).shape
            rng = np.random.default_rng(i)
            save_image(
                RgbImage(rng.integers(0, 256, (h, w, 3)).astype(np.uint8)),
                root / img,
            )
            record["image"] = img
        lines.append(json.dumps(record))
    manifest_path = root / "data.jsonl"
    manifest_path.write_text("\n".join(lines) + "\n")
    return manifest_path


# --- minimal 8-bit grayscale PNG codec (independent of Pillow) ---

def _chunk(typ: bytes, data: bytes) -> bytes:
    return (
        struct.pack(">I", len(data))
        + typ
        + data
        + struct.pack(">I", zlib.crc32(typ + data) & 0xFFFFFFFF)
    )


def encode_gray_png(arr: np.ndarray) -> bytes:
    h, w = arr.shape
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)
    raw = b"".join(b"\x00" + arr[r].tobytes() for r in range(h))
    return (
        b"\x89PNG\r\n\x1a\n"
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", zlib.compress(raw))
        + _chunk(b"IEND", b"")
    )


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    return b if pb <= pc else c


def decode_gray_png(data: bytes) -> np.ndarray:
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    pos = 8
    idat = b""
    w = h = None
    while pos < len(data):
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        typ = data[pos + 4 : pos + 8]
        body = data[pos + 8 : pos + 8 + length]
        if typ == b"IHDR":
            w, h, depth, ctype, _, _, interlace = struct.unpack(">IIBBBBB", body)
            assert depth == 8 and ctype == 0 and interlace == 0
        elif typ == b"IDAT":
            idat += body
        pos += 12 + length
    raw = zlib.decompress(idat)
    stride = w + 1
    out = np.zeros((h, w), dtype=np.uint8)
    prev = [0] * w
    for r in range(h):
        line = raw[r * stride : (r + 1) * stride]
        ft = line[0]
        cur = list(line[1:])
        for i in range(w):
            left = cur[i - 1] if i > 0 else 0
            up = prev[i]
            ul = prev[i - 1] if i > 0 else 0
            if ft == 1:
                cur[i] = (cur[i] + left) & 0xFF
            elif ft == 2:
                cur[i] = (cur[i] + up) & 0xFF
            elif ft == 3:
                cur[i] = (cur[i] + (left + up) // 2) & 0xFF
            elif ft == 4:
                cur[i] = (cur[i] + _paeth(left, up, ul)) & 0xFF
        out[r] = cur
        prev = cur
    return out
