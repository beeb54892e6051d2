"""HOSS1 binary checkpoint format.

Layout (all integers little-endian, all floats little-endian f64):

    magic b"HOSS1", version u32,
    block shape as 4 x u64: D, K, M, N,
    parameter tensors in canonical order W, mu, alpha, lambda, c, d, e,
        each as a raw C-order f64 array (axis order: visible dimension,
        then row, then column, then block),
    section count u32, then per section: 4-byte tag, payload length u64,
        payload bytes,
    crc32 u32 over all preceding bytes.

Optional sections:

    CONF  UTF-8 text of the resolved run configuration
    CENT  data centering vector, D x f64
    CHNS  persistent chain snapshots: n_chains u64, then per chain
          stream_id u64, v (D f64), f (K u8), g (M*K u8), h (N*K u8),
          s (M*N*K f64)
    TRNS  trainer counters: epoch u64, update_counter u64, lr f64
"""

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import CorruptFileError
from .gibbs import ChainState
from .model import BlockShape, LatentSample, ModelParams

_MAGIC = b"HOSS1"
_VERSION = 1


@dataclass
class Checkpoint:
    params: ModelParams
    center: np.ndarray = None
    chains: list = None
    epoch: int = None
    update_counter: int = None
    lr: float = None
    config_text: str = ""


def _pack_chains(chains):
    buf = bytearray(struct.pack("<Q", len(chains)))
    for ch in chains:
        buf += struct.pack("<Q", ch.rng_stream_id)
        buf += np.ascontiguousarray(ch.v, dtype="<f8").tobytes()
        buf += ch.x.f.astype(np.uint8).tobytes()
        buf += ch.x.g.astype(np.uint8).tobytes()
        buf += ch.x.h.astype(np.uint8).tobytes()
        buf += np.ascontiguousarray(ch.x.s, dtype="<f8").tobytes()
    return bytes(buf)


def _unpack_chains(payload, shape):
    D, K, M, N = shape.D, shape.K, shape.M, shape.N
    n, = struct.unpack_from("<Q", payload, 0)
    off = 8
    per = 8 + D * 8 + K + M * K + N * K + M * N * K * 8
    if len(payload) != 8 + n * per:
        raise CorruptFileError("chain section size mismatch")
    chains = []
    for _ in range(n):
        sid, = struct.unpack_from("<Q", payload, off)
        off += 8
        v = np.frombuffer(payload, dtype="<f8", count=D, offset=off).copy()
        off += D * 8
        f = np.frombuffer(payload, dtype=np.uint8, count=K, offset=off
                          ).astype(np.float64)
        off += K
        g = np.frombuffer(payload, dtype=np.uint8, count=M * K, offset=off
                          ).astype(np.float64).reshape(M, K)
        off += M * K
        h = np.frombuffer(payload, dtype=np.uint8, count=N * K, offset=off
                          ).astype(np.float64).reshape(N, K)
        off += N * K
        s = np.frombuffer(payload, dtype="<f8", count=M * N * K, offset=off
                          ).copy().reshape(M, N, K)
        off += M * N * K * 8
        chains.append(ChainState(x=LatentSample(f=f, g=g, h=h, s=s), v=v,
                                 rng_stream_id=int(sid)))
    return chains


def write_checkpoint(path, params, center=None, chains=None, epoch=None,
                     update_counter=None, lr=None, config_text=""):
    shape = params.shape
    buf = bytearray()
    buf += _MAGIC
    buf += struct.pack("<I", _VERSION)
    buf += struct.pack("<QQQQ", shape.D, shape.K, shape.M, shape.N)
    for _, arr in params.arrays():
        buf += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    sections = []
    if config_text:
        sections.append((b"CONF", config_text.encode("utf-8")))
    if center is not None:
        sections.append((b"CENT",
                         np.ascontiguousarray(center, dtype="<f8").tobytes()))
    if chains is not None:
        sections.append((b"CHNS", _pack_chains(chains)))
    if epoch is not None:
        sections.append((b"TRNS", struct.pack(
            "<QQd", int(epoch), int(update_counter or 0),
            float(lr if lr is not None else 0.0))))
    buf += struct.pack("<I", len(sections))
    for tag, payload in sections:
        buf += tag + struct.pack("<Q", len(payload)) + payload
    buf += struct.pack("<I", zlib.crc32(bytes(buf)) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(bytes(buf))


def _tensor_shapes(shape):
    D, K, M, N = shape.D, shape.K, shape.M, shape.N
    return [("W", (D, M, N, K)), ("mu", (M, N, K)), ("alpha", (M, N, K)),
            ("lam", (D,)), ("c", (M, K)), ("d", (N, K)), ("e", (K,))]


def read_checkpoint(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(_MAGIC) + 4 + 32 + 4 + 4 or raw[:len(_MAGIC)] != _MAGIC:
        raise CorruptFileError(f"{path}: not a HOSS1 checkpoint")
    crc_stored, = struct.unpack("<I", raw[-4:])
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != crc_stored:
        raise CorruptFileError(f"{path}: CRC mismatch")
    off = len(_MAGIC)
    version, = struct.unpack_from("<I", raw, off)
    off += 4
    if version != _VERSION:
        raise CorruptFileError(f"{path}: unsupported version {version}")
    D, K, M, N = struct.unpack_from("<QQQQ", raw, off)
    off += 32
    shape = BlockShape(D=D, K=K, M=M, N=N)
    tensors = {}
    for name, tshape in _tensor_shapes(shape):
        count = int(np.prod(tshape))
        if off + count * 8 > len(raw) - 4:
            raise CorruptFileError(f"{path}: truncated tensor {name}")
        tensors[name] = np.frombuffer(
            raw, dtype="<f8", count=count, offset=off).copy().reshape(tshape)
        off += count * 8
    params = ModelParams(shape, **tensors)
    nsec, = struct.unpack_from("<I", raw, off)
    off += 4
    ckpt = Checkpoint(params=params)
    for _ in range(nsec):
        if off + 12 > len(raw) - 4:
            raise CorruptFileError(f"{path}: truncated section header")
        tag = raw[off:off + 4]
        length, = struct.unpack_from("<Q", raw, off + 4)
        off += 12
        if off + length > len(raw) - 4:
            raise CorruptFileError(f"{path}: truncated section {tag!r}")
        payload = raw[off:off + length]
        off += length
        if tag == b"CONF":
            ckpt.config_text = payload.decode("utf-8")
        elif tag == b"CENT":
            ckpt.center = np.frombuffer(payload, dtype="<f8").copy()
        elif tag == b"CHNS":
            ckpt.chains = _unpack_chains(payload, shape)
        elif tag == b"TRNS":
            ckpt.epoch, ckpt.update_counter, ckpt.lr = struct.unpack(
                "<QQd", payload)
        # unknown tags are skipped for forward compatibility
    if off != len(raw) - 4:
        raise CorruptFileError(f"{path}: trailing bytes before CRC")
    return ckpt
