"""Self-describing binary snapshot format for spectral fields.

Layout (all integers little-endian unsigned 32-bit, floats little-endian
IEEE-754 binary64):

    offset  size  content
    0       8     magic bytes b"VISCOFLD"
    8       4     format version (currently 1)
    12      4     spatial dimension (2 or 3)
    16      4     rank code: 0 scalar, 1 vector, 2 matrix
    20      4     points per axis n
    24      8     domain scale L (float64)
    32      4     component count (1, dim, or dim*dim)
    36      8     dealias fraction (float64)
    44      ...   for each component, in row-major component order, the
                  complex coefficients as (re, im) float64 pairs in
                  row-major wavevector order (numpy C order of the
                  full FFT layout, axis frequencies 0..n/2-1, -n/2..-1)

Coefficients use the package normalization: the k=0 entry is the grid mean.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import InputError
from .grid import Grid, SpectralField

MAGIC = b"VISCOFLD"
VERSION = 1
_RANK_CODE = {"scalar": 0, "vector": 1, "matrix": 2}
_CODE_RANK = {v: k for k, v in _RANK_CODE.items()}


def save_field(path, f: SpectralField):
    g = f.grid
    ncomp = f.ncomp
    header = MAGIC + struct.pack("<IIIIdId", VERSION, g.dim, _RANK_CODE[f.rank],
                                 g.n, g.length, ncomp, g.dealias_frac)
    flat = np.ascontiguousarray(f.coeff).reshape(ncomp, -1)
    with open(path, "wb") as fh:
        fh.write(header)
        for c in range(ncomp):
            pairs = np.empty(flat.shape[1] * 2, dtype="<f8")
            pairs[0::2] = flat[c].real
            pairs[1::2] = flat[c].imag
            fh.write(pairs.tobytes())


def load_field(path) -> SpectralField:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise InputError(f"not a field snapshot: bad magic {magic!r}")
        version, dim, rank_code, n, length, ncomp, frac = struct.unpack(
            "<IIIIdId", fh.read(struct.calcsize("<IIIIdId")))
        if version != VERSION:
            raise InputError(f"unsupported snapshot version {version}")
        grid = Grid(dim, n, length, frac)
        rank = _CODE_RANK[rank_code]
        comp_shape = SpectralField._comp_shape(grid, rank)
        expected = int(np.prod(comp_shape, dtype=int)) if comp_shape else 1
        if ncomp != expected:
            raise InputError(f"component count {ncomp} inconsistent with rank {rank}")
        coeff = np.empty(comp_shape + (n,) * dim, dtype=np.complex128)
        flat = coeff.reshape(ncomp, -1)
        for c in range(ncomp):
            pairs = np.frombuffer(fh.read(flat.shape[1] * 16), dtype="<f8")
            flat[c] = pairs[0::2] + 1j * pairs[1::2]
    return SpectralField(grid, coeff)
