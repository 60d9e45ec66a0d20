"""Disparity and image file formats.

Disparity maps travel as single-channel PFM (header ``Pf``, dimensions,
a scale factor whose sign encodes endianness, rows stored bottom to
top) or as 16-bit PNG in the KITTI convention (stored value = disparity
times 256, zero reserved for invalid).  Images load from any PIL-readable
grayscale or color file and are normalized to float in [0, 1]; color
collapses to luma.
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image

from .errors import FileFormatError
from .volume import INVALID_DISP, CostVolume, empty_volume

KITTI_SCALE = 256.0
LUMA_WEIGHTS = (0.299, 0.587, 0.114)
VOLUME_FILE_MAGIC = b"CBCV"
VOLUME_FILE_VERSION = 1


def _disp_invalid_mask(dmap):
    dmap = np.asarray(dmap, dtype=np.float64)
    return ~np.isfinite(dmap) | (dmap < 0) | (dmap == INVALID_DISP)


def write_pfm(dmap, path, scale=-1.0):
    """Single-channel PFM; invalid pixels are stored as +inf."""
    dmap = np.asarray(dmap, dtype=np.float64)
    if dmap.ndim != 2:
        raise FileFormatError("PFM writer expects a 2-D map")
    if scale == 0:
        raise FileFormatError("PFM scale must be nonzero")
    data = np.where(_disp_invalid_mask(dmap), np.inf, dmap).astype(np.float32)
    endian = "<f4" if scale < 0 else ">f4"
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(f"{scale:g}\n".encode("ascii"))
        f.write(data[::-1].astype(endian).tobytes())


def _read_pfm_token(f):
    """Whitespace-delimited header token, tolerating any spacing style."""
    tok = b""
    while True:
        c = f.read(1)
        if c == b"":
            raise FileFormatError("truncated PFM header")
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def _open_binary(path):
    try:
        return open(path, "rb")
    except OSError as e:
        raise FileFormatError(f"{path}: {e}")


def read_pfm(path):
    """Load a PFM disparity map; non-finite values become the sentinel."""
    with _open_binary(path) as f:
        magic = _read_pfm_token(f)
        if magic == b"PF":
            raise FileFormatError(f"{path}: color PFM not supported")
        if magic != b"Pf":
            raise FileFormatError(f"{path}: not a PFM file")
        try:
            w = int(_read_pfm_token(f))
            h = int(_read_pfm_token(f))
            scale = float(_read_pfm_token(f))
        except ValueError:
            raise FileFormatError(f"{path}: malformed PFM header")
        if w <= 0 or h <= 0 or scale == 0:
            raise FileFormatError(f"{path}: bad PFM dimensions or scale")
        payload = f.read(w * h * 4)
    if len(payload) != w * h * 4:
        raise FileFormatError(f"{path}: truncated PFM payload")
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(payload, dtype=dtype).reshape(h, w)[::-1]
    data = data.astype(np.float64)
    return np.where(np.isfinite(data), data, INVALID_DISP)


def write_kitti_png(dmap, path):
    """16-bit PNG, stored value = round(256 * disparity); 0 = invalid."""
    dmap = np.asarray(dmap, dtype=np.float64)
    if dmap.ndim != 2:
        raise FileFormatError("PNG writer expects a 2-D map")
    bad = _disp_invalid_mask(dmap)
    stored = np.rint(np.where(bad, 0.0, dmap) * KITTI_SCALE)
    stored = np.clip(stored, 0, 65535).astype(np.uint16)
    stored[bad] = 0
    img = Image.fromarray(stored)  # uint16 maps to mode I;16
    img.save(path, format="PNG")


def read_kitti_png(path):
    try:
        img = Image.open(path)
    except Exception as e:
        raise FileFormatError(f"{path}: {e}")
    with img:
        if img.mode not in ("I;16", "I", "I;16B"):
            raise FileFormatError(f"{path}: expected a 16-bit grayscale PNG, got mode {img.mode}")
        stored = np.asarray(img, dtype=np.uint32)
    dmap = stored.astype(np.float64) / KITTI_SCALE
    return np.where(stored == 0, INVALID_DISP, dmap)


def load_image(path):
    """Any PIL-readable image as float64 intensity in [0, 1]."""
    try:
        img = Image.open(path)
    except Exception as e:
        raise FileFormatError(f"{path}: {e}")
    with img:
        mode = img.mode
        if mode in ("RGB", "RGBA", "P"):
            arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
            r, g, b = LUMA_WEIGHTS
            out = r * arr[..., 0] + g * arr[..., 1] + b * arr[..., 2]
        elif mode == "L":
            out = np.asarray(img, dtype=np.float64) / 255.0
        elif mode in ("I;16", "I;16B"):
            out = np.asarray(img, dtype=np.float64) / 65535.0
        elif mode == "I":
            arr = np.asarray(img, dtype=np.float64)
            out = arr / 65535.0 if arr.max() > 255 else arr / 255.0
        elif mode == "F":
            out = np.asarray(img, dtype=np.float64)
        else:
            raise FileFormatError(f"{path}: unsupported image mode {mode}")
    if out.ndim != 2:
        raise FileFormatError(f"{path}: expected a single image plane")
    return np.clip(out, 0.0, 1.0)


def save_image(img, path):
    """8-bit grayscale PNG/PGM from a [0, 1] float image."""
    img = np.asarray(img, dtype=np.float64)
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)


def save_mask(mask, path):
    """Boolean mask as an 8-bit PNG, True stored as 255."""
    data = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)


def load_mask(path):
    try:
        img = Image.open(path)
    except Exception as e:
        raise FileFormatError(f"{path}: {e}")
    with img:
        arr = np.asarray(img.convert("L"), dtype=np.uint8)
    return arr > 127


def save_cost_volume(vol: CostVolume, path):
    """Flat little-endian float32 dump of a cost volume for offline study."""
    h, w, nd = vol.cost.shape
    ref_flag = 0 if vol.reference == "left" else 1
    with open(path, "wb") as f:
        f.write(VOLUME_FILE_MAGIC)
        f.write(struct.pack("<4I", VOLUME_FILE_VERSION, h, w, nd))
        f.write(struct.pack("<Id", ref_flag, float(vol.max_cost)))
        f.write(vol.cost.astype("<f4").tobytes())


def load_cost_volume(path) -> CostVolume:
    with _open_binary(path) as f:
        magic = f.read(4)
        if magic != VOLUME_FILE_MAGIC:
            raise FileFormatError(f"{path}: not a cost-volume file")
        header = f.read(16 + 12)
        if len(header) != 28:
            raise FileFormatError(f"{path}: truncated header")
        version, h, w, nd = struct.unpack("<4I", header[:16])
        ref_flag, max_cost = struct.unpack("<Id", header[16:])
        if version != VOLUME_FILE_VERSION:
            raise FileFormatError(f"{path}: unsupported version {version}")
        if ref_flag not in (0, 1):
            raise FileFormatError(f"{path}: bad reference flag")
        payload = f.read(h * w * nd * 4)
        if len(payload) != h * w * nd * 4:
            raise FileFormatError(f"{path}: truncated payload")
    vol = empty_volume(h, w, nd - 1, max_cost,
                       "left" if ref_flag == 0 else "right")
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(h, w, nd)
    vol.cost[vol.valid] = data[vol.valid]
    return vol
