"""Atomic structures, extended-XYZ I/O and neighbor lists."""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigurationError, InputError, ParseError


@dataclass(frozen=True)
class Structure:
    positions: np.ndarray
    symbols: tuple
    cell: np.ndarray | None = None
    pbc: tuple = (False, False, False)
    tags: dict = field(default_factory=dict)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "symbols", tuple(str(s) for s in self.symbols))
        object.__setattr__(self, "pbc", tuple(bool(p) for p in self.pbc))
        if len(self.symbols) != len(pos):
            raise InputError("positions and symbols must have the same length")
        if self.cell is not None:
            object.__setattr__(self, "cell", np.asarray(self.cell, dtype=float).reshape(3, 3))
        if any(self.pbc):
            if self.cell is None or abs(np.linalg.det(self.cell)) < 1e-12:
                raise InputError("periodic structures need a non-singular cell")

    def __len__(self):
        return len(self.symbols)

    @property
    def periodic(self):
        return any(self.pbc)

    def species_codes(self, table):
        """Dense integer codes of the symbols in ``table`` order."""
        index = {s: k for k, s in enumerate(table)}
        try:
            return np.array([index[s] for s in self.symbols], dtype=int)
        except KeyError as err:
            raise InputError(f"species {err.args[0]!r} missing from species table {table}") from None

    def transformed(self, matrix=None, shift=None):
        """Copy with positions (and cell rows) mapped by x -> matrix @ x + shift.

        Vector tags ("dipole") are rotated with the structure.
        """
        pos = self.positions
        cell = self.cell
        tags = dict(self.tags)
        if matrix is not None:
            matrix = np.asarray(matrix, dtype=float)
            pos = pos @ matrix.T
            cell = None if cell is None else cell @ matrix.T
            if "dipole" in tags:
                tags["dipole"] = matrix @ np.asarray(tags["dipole"], dtype=float)
        if shift is not None:
            pos = pos + np.asarray(shift, dtype=float)
        return replace(self, positions=pos, cell=cell, tags=tags)

    def permuted(self, order):
        order = np.asarray(order)
        return replace(self, positions=self.positions[order], symbols=tuple(self.symbols[k] for k in order))


def species_table(structures):
    """Sorted list of all symbols present in ``structures``."""
    return sorted({s for st in structures for s in st.symbols})


# ---------------------------------------------------------------------------
# extended XYZ


def _format_value(value):
    if isinstance(value, (bool, np.bool_)):
        return "T" if value else "F"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (list, tuple, np.ndarray)):
        return '"' + " ".join(_format_value(v) for v in np.ravel(value)) + '"'
    text = str(value)
    if any(c.isspace() for c in text) or "=" in text:
        return '"' + text + '"'
    return text


def _parse_value(text):
    parts = text.split()
    if len(parts) > 1:
        vals = [_parse_scalar(p) for p in parts]
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            return np.array(vals, dtype=float)
        return text
    return _parse_scalar(text)


def _parse_scalar(text):
    if text in ("T", "True"):
        return True
    if text in ("F", "False"):
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _parse_comment(line, lineno):
    try:
        tokens = shlex.split(line, posix=True)
    except ValueError as err:
        raise ParseError(f"cannot parse comment line: {err}", lineno) from None
    info = {}
    for tok in tokens:
        if "=" not in tok:
            continue
        key, value = tok.split("=", 1)
        info[key] = value
    return info


def read_xyz(path):
    """Read all frames of an extended-XYZ file."""
    lines = Path(path).read_text().splitlines()
    out = []
    k = 0
    while k < len(lines):
        if not lines[k].strip():
            k += 1
            continue
        try:
            n = int(lines[k].strip())
        except ValueError:
            raise ParseError(f"expected atom count, got {lines[k]!r}", k + 1) from None
        if n < 0:
            raise ParseError("negative atom count", k + 1)
        if k + 1 >= len(lines):
            raise ParseError("missing comment line", k + 2)
        raw = _parse_comment(lines[k + 1], k + 2)
        props = raw.pop("Properties", "species:S:1:pos:R:3")
        columns = _parse_properties(props, k + 2)
        cell = None
        if "Lattice" in raw:
            lat = raw.pop("Lattice").split()
            if len(lat) != 9:
                raise ParseError("Lattice needs 9 numbers", k + 2)
            cell = np.array([float(v) for v in lat]).reshape(3, 3)
        pbc = (cell is not None,) * 3
        if "pbc" in raw:
            flags = raw.pop("pbc").split()
            pbc = tuple(_parse_scalar(f) is True for f in flags)
        tags = {key: _parse_value(val) for key, val in raw.items()}
        symbols, positions = [], []
        for a in range(n):
            lineno = k + 3 + a
            if lineno - 1 >= len(lines):
                raise ParseError(f"expected {n} atom rows, file ended", lineno)
            fields = lines[lineno - 1].split()
            width = sum(c[2] for c in columns)
            if len(fields) < width:
                raise ParseError(f"atom row has {len(fields)} fields, expected {width}", lineno)
            pos = 0
            sym = xyz = None
            for name, _kind, count in columns:
                chunk = fields[pos:pos + count]
                pos += count
                if name == "species":
                    sym = chunk[0]
                elif name == "pos":
                    try:
                        xyz = [float(v) for v in chunk]
                    except ValueError:
                        raise ParseError(f"non-numeric position {chunk}", lineno) from None
            if sym is None or xyz is None:
                raise ParseError("Properties must include species and pos", lineno)
            symbols.append(sym)
            positions.append(xyz)
        out.append(Structure(np.array(positions).reshape(-1, 3), tuple(symbols), cell, pbc, tags))
        k += 2 + n
    return out


def _parse_properties(text, lineno):
    parts = text.split(":")
    if len(parts) % 3:
        raise ParseError(f"malformed Properties {text!r}", lineno)
    cols = []
    for j in range(0, len(parts), 3):
        try:
            cols.append((parts[j], parts[j + 1], int(parts[j + 2])))
        except ValueError:
            raise ParseError(f"malformed Properties {text!r}", lineno) from None
    return cols


def write_xyz(structures, path, extra_info=None):
    """Write structures as extended XYZ; ``extra_info`` is echoed into every comment line."""
    if isinstance(structures, Structure):
        structures = [structures]
    chunks = []
    for st in structures:
        fields = []
        if st.cell is not None:
            fields.append("Lattice=" + _format_value(st.cell.ravel()))
        fields.append("Properties=species:S:1:pos:R:3")
        for key, value in {**(extra_info or {}), **st.tags}.items():
            fields.append(f"{key}={_format_value(value)}")
        fields.append('pbc="' + " ".join("T" if p else "F" for p in st.pbc) + '"')
        chunks.append(str(len(st)))
        chunks.append(" ".join(fields))
        for sym, (x, y, z) in zip(st.symbols, st.positions):
            chunks.append(f"{sym} {float(x)!r} {float(y)!r} {float(z)!r}")
    Path(path).write_text("\n".join(chunks) + "\n")


# ---------------------------------------------------------------------------
# neighbor lists


@dataclass(frozen=True)
class NeighborList:
    """Ordered pairs (center i, neighbor j) with vector r_j - r_i."""

    centers: np.ndarray
    neighbors: np.ndarray
    vectors: np.ndarray
    distances: np.ndarray

    def __len__(self):
        return len(self.centers)

    def pairs(self):
        return list(zip(self.centers.tolist(), self.neighbors.tolist()))


def _min_cell_height(cell):
    vol = abs(np.linalg.det(cell))
    heights = [vol / np.linalg.norm(np.cross(cell[(k + 1) % 3], cell[(k + 2) % 3])) for k in range(3)]
    return min(heights)


def build_neighbor_list(structure, r_cut):
    """All ordered pairs with 0 < distance <= r_cut, sorted by (center, neighbor).

    Periodic structures use the minimum image and require r_cut below half
    the smallest cell height.
    """
    if r_cut <= 0:
        raise ConfigurationError("r_cut must be positive")
    pos = structure.positions
    n = len(pos)
    if structure.periodic:
        h = _min_cell_height(structure.cell)
        if r_cut >= 0.5 * h:
            raise ConfigurationError(
                f"r_cut={r_cut} violates the half-cell restriction (min height {h:.4f})"
            )
        ii, jj = np.triu_indices(n, k=1)
        vec = pos[jj] - pos[ii]
        inv = np.linalg.inv(structure.cell)
        frac = vec @ inv
        periodic_axes = np.array(structure.pbc)
        frac[:, periodic_axes] -= np.round(frac[:, periodic_axes])
        vec = frac @ structure.cell
        # the rounded image can be beaten by a neighboring one in skewed cells
        shifts = np.array([[a, b, c] for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1)])
        shifts = shifts[np.all((shifts == 0) | periodic_axes, axis=1)]
        cand = vec[:, None, :] + (shifts @ structure.cell)[None, :, :]
        d = np.linalg.norm(cand, axis=2)
        best = np.argmin(d, axis=1)
        vec = cand[np.arange(len(vec)), best]
        dist = d[np.arange(len(vec)), best]
        keep = (dist <= r_cut) & (dist > 0)
        ii, jj, vec = ii[keep], jj[keep], vec[keep]
    else:
        tree = cKDTree(pos)
        pairs = tree.query_pairs(r_cut, output_type="ndarray")
        ii, jj = (pairs[:, 0], pairs[:, 1]) if len(pairs) else (np.zeros(0, int), np.zeros(0, int))
        vec = pos[jj] - pos[ii]
        d = np.linalg.norm(vec, axis=1)
        keep = (d <= r_cut) & (d > 0)
        ii, jj, vec = ii[keep], jj[keep], vec[keep]
    centers = np.concatenate([ii, jj]).astype(int)
    neighbors = np.concatenate([jj, ii]).astype(int)
    vectors = np.concatenate([vec, -vec]).reshape(-1, 3)
    order = np.lexsort((neighbors, centers))
    centers, neighbors, vectors = centers[order], neighbors[order], vectors[order]
    return NeighborList(centers, neighbors, vectors, np.linalg.norm(vectors, axis=1))
