"""Dyadic frequency blocks, Besov and hybrid norms, paraproducts.

The radial cutoff chi is 1 on [0, 5/3], vanishes beyond 12/5, and descends
smoothly in between via an exp(-1/x) smoothstep, so the induced bump
psi(xi) = chi(|xi|) - chi(2|xi|) is supported in the shell
{5/6 <= |xi| <= 12/5} and the shifted family psi(2^-q xi) partitions unity
away from the origin.  Block q of a field keeps frequencies in
2^q * [5/6, 12/5]; blocks at distance >= 2 have disjoint supports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .grid import Grid, SpectralField, dealiased_product

SHELL_LO = 5.0 / 6.0
SHELL_HI = 12.0 / 5.0
_CHI_FLAT = 5.0 / 3.0          # chi == 1 up to here
_CHI_END = 12.0 / 5.0          # chi == 0 from here


def _smooth_step(t):
    """C-infinity step: 0 for t<=0, 1 for t>=1."""
    t = np.asarray(t, dtype=np.float64)
    a = np.zeros_like(t)
    pos = t > 0.0
    a[pos] = np.exp(-1.0 / t[pos])
    b = np.zeros_like(t)
    neg = t < 1.0
    b[neg] = np.exp(-1.0 / (1.0 - t[neg]))
    return a / (a + b)


def chi(r):
    """Radial low-pass profile: 1 on [0, 5/3], 0 beyond 12/5, smooth between."""
    r = np.asarray(r, dtype=np.float64)
    out = np.empty_like(r)
    out[r <= _CHI_FLAT] = 1.0
    out[r >= _CHI_END] = 0.0
    mid = (r > _CHI_FLAT) & (r < _CHI_END)
    out[mid] = 1.0 - _smooth_step((r[mid] - _CHI_FLAT) / (_CHI_END - _CHI_FLAT))
    return out


def psi(r):
    """Shell bump chi(r) - chi(2r), supported in [5/6, 12/5]."""
    r = np.asarray(r, dtype=np.float64)
    return chi(r) - chi(2.0 * r)


class DyadicFamily:
    """Block multipliers psi(2^-q |xi|) bound to one grid.

    The active index range [q_lo, q_hi] is fixed by the grid's frequency
    extent; blocks outside it are identically zero on the grid, so all
    Z-indexed sums truncate exactly.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        self.q_lo = int(np.floor(np.log2(grid.xi_min * 5.0 / 12.0)))
        self.q_hi = int(np.ceil(np.log2(grid.xi_max * 6.0 / 5.0)))
        self._psi = {}
        self._chi = {}

    @property
    def q_range(self):
        return range(self.q_lo, self.q_hi + 1)

    def psi_array(self, q: int) -> np.ndarray:
        if q not in self._psi:
            self._psi[q] = psi(self.grid.xi_mag * 2.0 ** (-q)) * self.grid.keep_mask
        return self._psi[q]

    def chi_array(self, q: int) -> np.ndarray:
        """Low-pass multiplier chi(2^-q |xi|) on retained modes, mean included."""
        if q not in self._chi:
            self._chi[q] = chi(self.grid.xi_mag * 2.0 ** (-q)) * self.grid.keep_mask
        return self._chi[q]

    def partition_defect(self) -> float:
        """max over nonzero retained frequencies of |sum_q psi_q - 1|."""
        total = np.zeros_like(self.grid.xi_mag)
        for q in self.q_range:
            total += self.psi_array(q)
        mask = self.grid.keep_mask & (self.grid.xi_mag > 0)
        return float(np.max(np.abs(total[mask] - 1.0)))

    # -- block operators -----------------------------------------------

    def block(self, f: SpectralField, q: int) -> SpectralField:
        """Frequency localization of f to the dyadic shell of index q.

        Outside the active range the result is a zero field (documented,
        not an error): those multipliers vanish on every grid frequency.
        """
        if q < self.q_lo or q > self.q_hi:
            return SpectralField.zeros(f.grid, f.rank)
        return SpectralField(f.grid, f.coeff * self.psi_array(q))

    def low_cutoff(self, f: SpectralField, q: int) -> SpectralField:
        """Telescoped partial sum of blocks p <= q-1 (mean mode excluded)."""
        if q - 1 < self.q_lo:
            return SpectralField.zeros(f.grid, f.rank)
        g = SpectralField(f.grid, f.coeff * self.chi_array(q - 1))
        return g.project_mean_zero()

    def block_l2_profile(self, f: SpectralField) -> np.ndarray:
        """Array of ||block_q f||_L2 over the active range."""
        p = f.power_profile()
        out = np.empty(self.q_hi - self.q_lo + 1)
        for i, q in enumerate(self.q_range):
            w = self.psi_array(q)
            out[i] = np.sqrt(float(np.sum(p * w * w)))
        return out


@dataclass(frozen=True)
class BesovIndex:
    """Regularity index: homogeneous when t is None, hybrid otherwise.

    The per-block weight exponent is s for q <= 0 and t for q >= 1, the
    standard low/high-frequency split of hybrid spaces.
    """
    s: float
    t: float | None = None

    def weight_exponent(self, q: int) -> float:
        if self.t is None or q <= 0:
            return self.s
        return self.t

    @property
    def kind(self) -> str:
        return "homogeneous" if self.t is None else "hybrid"


def _weighted_block_sum(fam: DyadicFamily, f: SpectralField, index: BesovIndex) -> float:
    total = 0.0
    profile = fam.block_l2_profile(f)
    for i, q in enumerate(fam.q_range):
        total += 2.0 ** (q * index.weight_exponent(q)) * profile[i]
    return total


def besov_norm(f: SpectralField, s: float, fam: DyadicFamily | None = None) -> float:
    """Homogeneous Besov norm: sum_q 2^(sq) ||block_q f||_L2 (mean-zero f)."""
    fam = fam or DyadicFamily(f.grid)
    return _weighted_block_sum(fam, f, BesovIndex(s))


def hybrid_norm(f: SpectralField, s: float, t: float,
                fam: DyadicFamily | None = None) -> float:
    """Hybrid norm: exponent s on blocks q <= 0, t on blocks q >= 1.

    hybrid_norm(f, s, s) reproduces besov_norm(f, s) bit for bit: both run
    the same summation loop in the same order.
    """
    fam = fam or DyadicFamily(f.grid)
    return _weighted_block_sum(fam, f, BesovIndex(s, t))


# ----------------------------------------------------------------------
# paraproducts
# ----------------------------------------------------------------------

def paraproduct(f: SpectralField, g: SpectralField,
                fam: DyadicFamily | None = None) -> SpectralField:
    """Low-high part of the product: sum_q (low_cutoff_{q-1} f) * (block_q g)."""
    fam = fam or DyadicFamily(f.grid)
    out = SpectralField.zeros(f.grid, g.rank)
    for q in fam.q_range:
        low = fam.low_cutoff(f, q - 1)  # blocks p <= q-2 of f
        if np.all(low.coeff == 0):
            continue
        out = out + dealiased_product(low, fam.block(g, q))
    return out


def remainder(f: SpectralField, g: SpectralField,
              fam: DyadicFamily | None = None) -> SpectralField:
    """Diagonal part of the product: blocks of f against neighbor blocks of g."""
    fam = fam or DyadicFamily(f.grid)
    out = SpectralField.zeros(f.grid, g.rank)
    for q in fam.q_range:
        bf = fam.block(f, q)
        near = fam.block(g, q - 1) + fam.block(g, q) + fam.block(g, q + 1)
        out = out + dealiased_product(bf, near)
    return out


def bony_defect(f: SpectralField, g: SpectralField,
                fam: DyadicFamily | None = None) -> float:
    """Relative gap between T_f g + T_g f + R(f,g) and the dealiased product fg."""
    fam = fam or DyadicFamily(f.grid)
    direct = dealiased_product(f, g).project_mean_zero()
    recon = (paraproduct(f, g, fam) + paraproduct(g, f, fam)
             + remainder(f, g, fam)).project_mean_zero()
    denom = direct.l2()
    if denom == 0.0:
        return (recon - direct).l2()
    return (recon - direct).l2() / denom


# ----------------------------------------------------------------------
# measured constants for the convection and product estimates
# ----------------------------------------------------------------------

def _phi_weight(s1: float, s2: float, q: int) -> float:
    return s1 if q <= 0 else s2


def _check_index_range(dim: int, s1: float, s2: float):
    lo, hi = -dim / 2.0, 1.0 + dim / 2.0
    for s in (s1, s2):
        if not (lo < s <= hi):
            raise InputError(f"index {s} outside admissible range ({lo}, {hi}]")


def measure_convection_constant(u: SpectralField, f: SpectralField,
                                symbol, degree: float,
                                s1: float, s2: float,
                                fam: DyadicFamily | None = None) -> dict:
    """Measured per-block ratios for the convection inner-product estimate.

    For each block q the quantity |(G(D) block_q(u.grad f) | G(D) block_q f)|
    is divided by 2^(-q(phi(q)-degree)) * ||u||_{B^{1+N/2}} *
    ||f||_{hybrid(s1,s2)} * ||G(D) block_q f||_L2.  The ratios are reported
    per block together with their supremum and l1 profile; nothing is
    asserted against a fixed constant.

    ``symbol`` maps the grid to a multiplier array and must be homogeneous
    of the stated degree.
    """
    grid = u.grid
    _check_index_range(grid.dim, s1, s2)
    fam = fam or DyadicFamily(grid)
    from .operators import convect  # local import to avoid a cycle

    w = convect(u, f)
    g_mult = symbol(grid)
    nu_norm = besov_norm(u, 1.0 + grid.dim / 2.0, fam)
    nf_norm = hybrid_norm(f, s1, s2, fam)
    ratios = {}
    if nu_norm == 0.0 or nf_norm == 0.0:
        return {"ratios": {}, "sup": 0.0, "l1": 0.0}
    for q in fam.q_range:
        bf = SpectralField(grid, fam.block(f, q).coeff * g_mult)
        bw = SpectralField(grid, fam.block(w, q).coeff * g_mult)
        denom_block = bf.l2()
        if denom_block < 1e-300:
            continue
        lhs = abs(bw.inner(bf))
        scale = 2.0 ** (-q * (_phi_weight(s1, s2, q) - degree))
        ratios[q] = lhs / (scale * nu_norm * nf_norm * denom_block)
    sup = max(ratios.values()) if ratios else 0.0
    return {"ratios": ratios, "sup": sup, "l1": sum(ratios.values())}


def measure_product_constant(u: SpectralField, E: SpectralField,
                             s1: float, s2: float,
                             fam: DyadicFamily | None = None) -> float:
    """Measured ratio ||grad(u) E|| / (||u||_{B^{1+N/2}} ||E||) in hybrid norms."""
    grid = u.grid
    _check_index_range(grid.dim, s1, s2)
    fam = fam or DyadicFamily(grid)
    from .operators import jacobian, matrix_product

    if E.l2() == 0.0 or u.l2() == 0.0:
        return 0.0
    prod = matrix_product(jacobian(u), E)
    return hybrid_norm(prod, s1, s2, fam) / (
        besov_norm(u, 1.0 + grid.dim / 2.0, fam) * hybrid_norm(E, s1, s2, fam))
