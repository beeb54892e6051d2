"""Synthetic color/position dataset with ground-truth factor labels.

Each sample is a 3-channel strip of 20 pixels (D = 60, channel-major:
pixel index = 20 * channel + position).  Three color bits choose the
object color per channel; five position bits choose which of the five
disjoint 4-pixel slots hold an object.  Every object in a sample shares
the one color, so the clean images form a 2^3 x 2^5 factorial family;
i.i.d. Gaussian noise is then added to every pixel.

File format HOSSDATA1 (all integers little-endian):
    magic b"HOSSDATA1", version u32,
    header_len u32 + UTF-8 header text (embedded generation config),
    n u64, D u64, color_width u32, position_width u32,
    pixels as n*D little-endian f64,
    labels as n*(color_width+position_width) u8 rows (color bits first),
    crc32 u32 over all preceding bytes.
"""

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .errors import CorruptFileError

N_CHANNELS = 3
N_SLOTS = 5
SLOT_WIDTH = 4
STRIP_WIDTH = N_SLOTS * SLOT_WIDTH
PIXELS = N_CHANNELS * STRIP_WIDTH

_MAGIC = b"HOSSDATA1"
_VERSION = 1


@dataclass(frozen=True)
class ToyConfig:
    n_samples: int
    noise_sigma: float = 0.1
    seed: int = 0
    include_empty: bool = True

    def __post_init__(self):
        if self.n_samples < 0:
            raise ValueError("n_samples must be >= 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    def header_lines(self):
        return [f"n={self.n_samples}", f"sigma={self.noise_sigma!r}",
                f"seed={self.seed}", f"include_empty={self.include_empty}"]


@dataclass
class ToySample:
    pixels: np.ndarray         # (60,)
    color_bits: np.ndarray     # (3,) uint8
    position_bits: np.ndarray  # (5,) uint8


@dataclass
class ToyDataset:
    pixels: np.ndarray         # (n, D) float64
    color_bits: np.ndarray     # (n, color_width) uint8
    position_bits: np.ndarray  # (n, position_width) uint8
    header: str = ""

    @property
    def n(self):
        return self.pixels.shape[0]

    @property
    def dim(self):
        return self.pixels.shape[1]

    def sample(self, i):
        return ToySample(self.pixels[i], self.color_bits[i],
                         self.position_bits[i])


def clean_pattern(color_bits, position_bits):
    """Noise-free pixel vector for one (color, placement) combination."""
    img = np.zeros((N_CHANNELS, STRIP_WIDTH))
    for pslot in np.nonzero(np.asarray(position_bits))[0]:
        lo = SLOT_WIDTH * pslot
        img[:, lo:lo + SLOT_WIDTH] = np.asarray(
            color_bits, dtype=np.float64)[:, None]
    return img.reshape(-1)


def gen_toy(cfg):
    """Generate a dataset; sample i is a pure function of (seed, i)."""
    pixels = np.empty((cfg.n_samples, PIXELS))
    colors = np.empty((cfg.n_samples, N_CHANNELS), dtype=np.uint8)
    positions = np.empty((cfg.n_samples, N_SLOTS), dtype=np.uint8)
    for i in range(cfg.n_samples):
        gen = rngmod.stream(cfg.seed, i)
        color = (gen.random(N_CHANNELS) < 0.5).astype(np.uint8)
        pos = (gen.random(N_SLOTS) < 0.5).astype(np.uint8)
        if not cfg.include_empty:
            while not pos.any():
                pos = (gen.random(N_SLOTS) < 0.5).astype(np.uint8)
        noise = gen.standard_normal(PIXELS) * cfg.noise_sigma
        pixels[i] = clean_pattern(color, pos) + noise
        colors[i] = color
        positions[i] = pos
    return ToyDataset(pixels=pixels, color_bits=colors,
                      position_bits=positions,
                      header="\n".join(cfg.header_lines()))


# ---------------------------------------------------------------------------
# serialization


def save_dataset(ds, path, header=None):
    """Write HOSSDATA1; `header` overrides the dataset's embedded text."""
    text = (ds.header if header is None else header).encode("utf-8")
    n, D = ds.pixels.shape
    cw = ds.color_bits.shape[1]
    pw = ds.position_bits.shape[1]
    buf = bytearray()
    buf += _MAGIC
    buf += struct.pack("<I", _VERSION)
    buf += struct.pack("<I", len(text)) + text
    buf += struct.pack("<QQII", n, D, cw, pw)
    buf += np.ascontiguousarray(ds.pixels, dtype="<f8").tobytes()
    labels = np.concatenate(
        [ds.color_bits.astype(np.uint8), ds.position_bits.astype(np.uint8)],
        axis=1)
    buf += labels.tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(bytes(buf))


def load_dataset(path):
    """Read HOSSDATA1, verifying magic, structure and CRC."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(_MAGIC) + 4 or raw[:len(_MAGIC)] != _MAGIC:
        raise CorruptFileError(f"{path}: not a HOSSDATA1 file")
    if len(raw) < len(_MAGIC) + 4 + 4:
        raise CorruptFileError(f"{path}: truncated header")
    crc_stored, = struct.unpack("<I", raw[-4:])
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != crc_stored:
        raise CorruptFileError(f"{path}: CRC mismatch")
    off = len(_MAGIC)
    version, = struct.unpack_from("<I", raw, off)
    off += 4
    if version != _VERSION:
        raise CorruptFileError(f"{path}: unsupported version {version}")
    hlen, = struct.unpack_from("<I", raw, off)
    off += 4
    header = raw[off:off + hlen].decode("utf-8")
    off += hlen
    n, D, cw, pw = struct.unpack_from("<QQII", raw, off)
    off += struct.calcsize("<QQII")
    need = n * D * 8 + n * (cw + pw) + 4
    if len(raw) - off != need:
        raise CorruptFileError(f"{path}: payload size mismatch")
    pixels = np.frombuffer(raw, dtype="<f8", count=n * D,
                           offset=off).reshape(n, D).astype(np.float64)
    off += n * D * 8
    labels = np.frombuffer(raw, dtype=np.uint8, count=n * (cw + pw),
                           offset=off).reshape(n, cw + pw)
    return ToyDataset(pixels=pixels, color_bits=labels[:, :cw].copy(),
                      position_bits=labels[:, cw:].copy(), header=header)
