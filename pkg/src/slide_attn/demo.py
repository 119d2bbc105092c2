"""Worked 2x2 example: the Im2Col matrix seen by columns and by rows."""

from __future__ import annotations

import numpy as np

from .im2col import im2col, window_offsets
from .shift import shift_feature
from .tensor import pad_zero

FEATURE = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 2, 2, 1)
WINDOW = 3


def worked_example() -> dict:
    """Padded map, key matrix [9, 4], shifted maps and per-query windows."""
    k = WINDOW
    matrix = im2col(FEATURE, k)
    shifted = {(u, v): shift_feature(FEATURE, u, v)[0, :, :, 0] for u, v in window_offsets(k)}
    windows = {
        (i, j): pad_zero(FEATURE, 1, 1)[0, i : i + k, j : j + k, 0] for i in range(2) for j in range(2)
    }
    return {
        "feature": FEATURE[0, :, :, 0],
        "padded": pad_zero(FEATURE, 1, 1)[0, :, :, 0],
        "matrix": matrix.data[:, :, 0],
        "offsets": window_offsets(k),
        "shifted": shifted,
        "windows": windows,
    }


def _fmt(values) -> str:
    return " ".join(f"{v:g}" for v in np.ravel(values))


def render(example: dict | None = None) -> str:
    ex = worked_example() if example is None else example
    lines = ["feature map (2x2):"]
    lines += ["  " + _fmt(row) for row in ex["feature"]]
    lines.append("zero-padded by [1,1]:")
    lines += ["  " + _fmt(row) for row in ex["padded"]]
    lines.append("key matrix, 9 rows (u,v) x 4 columns (queries (0,0) (0,1) (1,0) (1,1)):")
    for g, (u, v) in enumerate(ex["offsets"]):
        lines.append(f"  row {g} (u={u:+d},v={v:+d}): {_fmt(ex['matrix'][g])}")
    lines.append("row view: each row is the map shifted by (u,v):")
    for g, (u, v) in enumerate(ex["offsets"]):
        same = np.array_equal(ex["matrix"][g], ex["shifted"][(u, v)].ravel())
        lines.append(f"  shift({u:+d},{v:+d}) = {_fmt(ex['shifted'][(u, v)])}  row match: {same}")
    lines.append("column view: each column is a query's flattened 3x3 window:")
    for col, (i, j) in enumerate(sorted(ex["windows"])):
        same = np.array_equal(ex["matrix"][:, col], ex["windows"][(i, j)].ravel())
        lines.append(f"  query ({i},{j}) window = {_fmt(ex['windows'][(i, j)])}  column match: {same}")
    return "\n".join(lines)
