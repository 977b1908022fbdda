"""Export attention matrices as CSV and 8-bit grayscale PGM images."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def to_gray(matrix: np.ndarray) -> np.ndarray:
    """Scale by the matrix maximum to ``uint8`` (0 black, 255 for the largest weight)."""
    m = np.asarray(matrix, dtype=np.float64)
    peak = m.max() if m.size else 0.0
    if peak <= 0:
        return np.zeros(m.shape, dtype=np.uint8)
    return np.rint(np.clip(m / peak, 0.0, 1.0) * 255).astype(np.uint8)


def write_pgm(path, matrix: np.ndarray) -> None:
    gray = to_gray(matrix)
    if gray.ndim != 2:
        raise ValueError("PGM export needs a 2-D matrix")
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        end = pos
        while not raw[end : end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end].decode("ascii"))
        pos = end
    if tokens[0] != "P5":
        raise ValueError(f"{path} is not a binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    return np.frombuffer(raw[pos + 1 : pos + 1 + w * h], dtype=np.uint8).reshape(h, w)


def export_attention(maps: np.ndarray, out_dir) -> list[Path]:
    """Write ``block{b}_head{h}.csv`` and ``.pgm`` for maps shaped ``[blocks, heads, N, N]``."""
    maps = np.asarray(maps)
    if maps.ndim != 4:
        raise ValueError(f"expected [blocks, heads, N, N] maps, got shape {maps.shape}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for b in range(maps.shape[0]):
        for h in range(maps.shape[1]):
            stem = out_dir / f"block{b}_head{h}"
            np.savetxt(stem.with_suffix(".csv"), maps[b, h], delimiter=",", fmt="%.17g")
            write_pgm(stem.with_suffix(".pgm"), maps[b, h])
            written += [stem.with_suffix(".csv"), stem.with_suffix(".pgm")]
    return written
