"""Binary PPM (P6) export of filter grids -- no imaging dependency.

One image per block: an M-row by N-column grid of tiles, each tile the
filter vector of one (row, column) pair reshaped to the data geometry
(channels x width; 3-channel geometries render as RGB strips of height
one, single-channel as replicated gray).  Each tile is min-max
normalized to [0, 255] on its own; constant tiles render mid-gray (128).
"""

import numpy as np

from .errors import CorruptFileError

PAD_VALUE = 255


def _tile_rgb(filt, channels, width):
    tile = np.asarray(filt, dtype=np.float64).reshape(channels, width)
    lo, hi = tile.min(), tile.max()
    if hi > lo:
        tile = (tile - lo) / (hi - lo) * 255.0
        tile = np.round(tile).astype(np.uint8)
    else:
        tile = np.full((channels, width), 128, dtype=np.uint8)
    if channels == 3:
        return tile.T[None, :, :]              # (1, width, 3)
    if channels == 1:
        return np.repeat(tile.T[None, :, :], 3, axis=2)
    # general case: render channels as stacked gray rows
    return np.repeat(tile[:, :, None], 3, axis=2)


def filter_grid_image(Wk, channels, width, pad=1):
    """uint8 RGB grid image for one block's filters Wk (D, M, N)."""
    D, M, N = Wk.shape
    if channels * width != D:
        raise ValueError(f"geometry {channels}x{width} does not cover D={D}")
    tile_h = 1 if channels in (1, 3) else channels
    H = M * tile_h + pad * (M + 1)
    Wpx = N * width + pad * (N + 1)
    img = np.full((H, Wpx, 3), PAD_VALUE, dtype=np.uint8)
    for i in range(M):
        for j in range(N):
            r0 = pad + i * (tile_h + pad)
            c0 = pad + j * (width + pad)
            img[r0:r0 + tile_h, c0:c0 + width] = _tile_rgb(
                Wk[:, i, j], channels, width)
    return img


def write_ppm(path, img, comment_lines=()):
    img = np.asarray(img, dtype=np.uint8)
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P6\n")
        for line in comment_lines:
            fh.write(f"# {line}\n".encode("utf-8"))
        fh.write(f"{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_ppm(path):
    """Parse a P6 file back into (image, comment lines)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(b"P6"):
        raise CorruptFileError(f"{path}: not a P6 PPM")
    comments = []
    pos = 2
    tokens = []
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            end = raw.index(b"\n", pos)
            comments.append(raw[pos + 1:end].decode("utf-8").strip())
            pos = end + 1
            continue
        end = pos
        while end < len(raw) and not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise CorruptFileError(f"{path}: unsupported maxval {maxval}")
    data = np.frombuffer(raw, dtype=np.uint8, count=h * w * 3, offset=pos)
    if data.size != h * w * 3:
        raise CorruptFileError(f"{path}: truncated pixel data")
    return data.reshape(h, w, 3).copy(), comments
