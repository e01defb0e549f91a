"""Auxiliary linear system with convection, per-block energy functionals,
and a constant-coefficient eigenvalue oracle for its decay rates.

The system couples five unknowns (rho, d, Omega, W = E^T - E, scalar
potential) through first-order frequency multipliers and carries viscous
smoothing on d and Omega only.  With zero convection and zero sources it
decouples per Fourier mode into three independent 2x2 pairs:

    (rho, d):        x'' + nu |xi|^2 x' + 2 |xi|^2 x = 0
    (Omega, W):      x'' + mu |xi|^2 x' +   |xi|^2 x = 0
    (potential, d):  x'' + nu |xi|^2 x' + 4 |xi|^2 x = 0

(each obtained by eliminating one variable from the corresponding pair),
which makes every damping/smoothing claim quantitatively testable.  The
pairs share d, so free runs exercise them in isolation; coupled runs only
make sense with compatible sources.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dyadic import DyadicFamily, besov_norm
from .errors import DiagnosticError, InputError, InvariantViolation
from .grid import Grid, SpectralField
from .model import HelmholtzState, SourceTerms
from .operators import convect, fractional_power, laplacian

PAIRS = ("rho_d", "omega_w", "potential_d")


# ----------------------------------------------------------------------
# energy constants
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyConstants:
    """Coupling weights of the low/high-frequency block energies.

    ``block_split`` is chosen deterministically so that on every block above
    it the first-order multiplier amplifies the L2 norm by at least
    2*gamma: block q carries frequencies >= 2^q * 5/6, hence
    block_split = ceil(log2(2*gamma*6/5)) suffices for all fields at once.
    """
    nu: float
    mu: float

    @property
    def gamma(self) -> float:
        return max(2.0 / self.mu ** 2, 5.0 / self.nu ** 2) + 1.0

    @property
    def block_split(self) -> int:
        return math.ceil(math.log2(2.0 * self.gamma * 6.0 / 5.0))

    @property
    def eta(self) -> float:
        q0 = self.block_split
        return max((4.0 ** q0 * self.nu ** 2 + 3.0) / 2.0,
                   self.nu,
                   self.nu / self.mu,
                   4.0 ** q0 * self.mu * self.nu / 2.0) + 1.0

    @property
    def beta1(self) -> float:
        return 2.0 / self.nu

    @property
    def beta2(self) -> float:
        return 2.0 / self.mu

    @classmethod
    def from_viscosity(cls, visc) -> "EnergyConstants":
        """Accepts any object exposing nu and mu (Lame or split pair)."""
        return cls(visc.nu, visc.mu)


# ----------------------------------------------------------------------
# right-hand side
# ----------------------------------------------------------------------

def linear_rhs(state: HelmholtzState, visc,
               u: SpectralField | None = None,
               sources: SourceTerms | None = None,
               d_mode: str = "rho") -> HelmholtzState:
    """Time derivative of the five-field linear system.

    ``d_mode`` selects the compressible equation: driven by the density
    ("rho", coefficient 2) or by the symmetric-part potential ("potential",
    coefficient 2); the two agree exactly when the sources satisfy the
    compatibility constraint.  Convection (when u is given) is dealiased;
    antisymmetry and mean-zero are preserved by construction.
    """
    if d_mode not in ("rho", "potential"):
        raise InputError(f"d_mode must be 'rho' or 'potential', got {d_mode}")
    nu, mu = visc.nu, visc.mu
    u_phys = u.to_physical() if u is not None else None

    def conv(f):
        if u is None:
            return None
        return convect(u, f, u_phys)

    lam_d = fractional_power(state.d, 1.0)
    rho_dot = -1.0 * lam_d
    if d_mode == "rho":
        d_dot = nu * laplacian(state.d) + 2.0 * fractional_power(state.rho, 1.0)
    else:
        d_dot = nu * laplacian(state.d) + 2.0 * fractional_power(state.potential, 1.0)
    om_dot = (mu * laplacian(state.omega)
              + fractional_power(state.skew, 1.0))
    skew_dot = -1.0 * fractional_power(state.omega, 1.0)
    pot_dot = -2.0 * lam_d

    if u is not None:
        rho_dot = rho_dot - conv(state.rho)
        d_dot = d_dot - conv(state.d)
        om_dot = om_dot - conv(state.omega)
        skew_dot = skew_dot - conv(state.skew)
        pot_dot = pot_dot - conv(state.potential)
    if sources is not None:
        rho_dot = rho_dot + sources.mass
        d_dot = d_dot + (sources.compressible if d_mode == "rho"
                         else sources.compressible_alt)
        om_dot = om_dot + sources.rotational
        skew_dot = skew_dot + sources.skew
        pot_dot = pot_dot + sources.potential

    return HelmholtzState(rho_dot.project_mean_zero(),
                          d_dot.project_mean_zero(),
                          om_dot.project_mean_zero(),
                          skew_dot.project_mean_zero(),
                          pot_dot.project_mean_zero())


# ----------------------------------------------------------------------
# block energies
# ----------------------------------------------------------------------

def _block_pieces(state: HelmholtzState, fam: DyadicFamily, q: int):
    b = {name: fam.block(getattr(state, name), q)
         for name in ("rho", "d", "omega", "skew", "potential")}
    lam = {name: fractional_power(b[name], 1.0) for name in b}
    return b, lam


def block_energy_low(state: HelmholtzState, q: int, consts: EnergyConstants,
                     fam: DyadicFamily | None = None) -> float:
    """Low-frequency block energy g_q (q <= block_split).

    Square combines weighted L2 norms (weights 2,2,1,1,1) with three cross
    terms scaled by nu/eta; eta is sized so the radicand is nonnegative for
    every state, and a negative radicand is reported as a violation, never
    clipped.
    """
    if q > consts.block_split:
        raise InputError(f"block {q} is above the split {consts.block_split}; use the high form")
    fam = fam or DyadicFamily(state.rho.grid)
    b, lam = _block_pieces(state, fam, q)
    ce = consts.nu / consts.eta
    sq = (2.0 * b["rho"].l2() ** 2 + 2.0 * b["d"].l2() ** 2
          + b["skew"].l2() ** 2 + b["potential"].l2() ** 2 + b["omega"].l2() ** 2
          - ce * lam["skew"].inner(b["omega"])
          - ce * lam["rho"].inner(b["d"])
          - ce * lam["potential"].inner(b["d"]))
    return _weighted_sqrt(sq, q, state.rho.grid.dim)


def block_energy_high(state: HelmholtzState, q: int, consts: EnergyConstants,
                      fam: DyadicFamily | None = None) -> float:
    """High-frequency block energy g_q (q > block_split).

    First-order norms on (rho, skew, potential), weights 2*gamma and gamma
    on (d, Omega), and cross terms beta1, beta2, 2*beta1; coercive for any
    state by the choice of gamma.
    """
    if q <= consts.block_split:
        raise InputError(f"block {q} is below the split {consts.block_split}; use the low form")
    fam = fam or DyadicFamily(state.rho.grid)
    b, lam = _block_pieces(state, fam, q)
    sq = (lam["rho"].l2() ** 2 + lam["skew"].l2() ** 2 + lam["potential"].l2() ** 2
          + 2.0 * consts.gamma * b["d"].l2() ** 2 + consts.gamma * b["omega"].l2() ** 2
          - consts.beta1 * lam["rho"].inner(b["d"])
          - consts.beta2 * lam["skew"].inner(b["omega"])
          - 2.0 * consts.beta1 * lam["potential"].inner(b["d"]))
    return _weighted_sqrt(sq, q, state.rho.grid.dim)


def _weighted_sqrt(sq: float, q: int, dim: int) -> float:
    if sq < -1e-13 * max(abs(sq), 1.0):
        raise InvariantViolation(
            f"block energy radicand negative at q={q}: {sq:.3e}; constants misconfigured")
    return 2.0 ** (q * (dim / 2.0 - 1.0)) * math.sqrt(max(sq, 0.0))


def block_energy(state: HelmholtzState, q: int, consts: EnergyConstants,
                 fam: DyadicFamily | None = None) -> float:
    if q <= consts.block_split:
        return block_energy_low(state, q, consts, fam)
    return block_energy_high(state, q, consts, fam)


def equivalence_ratio(state: HelmholtzState, E: SpectralField, q: int,
                      consts: EnergyConstants,
                      fam: DyadicFamily | None = None) -> float | None:
    """Measured ratio of g_q to the weighted block norms of (rho, E, d, Omega).

    The denominator weights rho and E by the hybrid exponent (N/2-1 low,
    N/2 high) and d, Omega by N/2-1.  Returns None on an empty block.
    """
    fam = fam or DyadicFamily(state.rho.grid)
    dim = state.rho.grid.dim
    w_re = dim / 2.0 - 1.0 if q <= 0 else dim / 2.0
    w_do = dim / 2.0 - 1.0
    denom = (2.0 ** (q * w_re) * (fam.block(state.rho, q).l2() + fam.block(E, q).l2())
             + 2.0 ** (q * w_do) * (fam.block(state.d, q).l2() + fam.block(state.omega, q).l2()))
    if denom < 1e-300:
        return None
    return block_energy(state, q, consts, fam) / denom


# ----------------------------------------------------------------------
# constant-coefficient oracle
# ----------------------------------------------------------------------

def constant_coeff_spectrum(xi: float, nu: float, mu: float) -> dict:
    """Eigenvalues of the three decoupled pairs at frequency magnitude xi.

    Derived by eliminating one unknown from each 2x2 system; see the module
    docstring for the resulting quadratics.
    """
    if xi <= 0.0:
        raise InputError("frequency magnitude must be positive")
    out = {}
    for pair, (damp, stiff) in {
        "rho_d": (nu, 2.0),
        "omega_w": (mu, 1.0),
        "potential_d": (nu, 4.0),
    }.items():
        b = damp * xi ** 2
        disc = complex(b * b - 4.0 * stiff * xi ** 2)
        root = np.sqrt(disc)
        out[pair] = ((-b + root) / 2.0, (-b - root) / 2.0)
    return out


def oracle_decay_rate(pair: str, xi: float, nu: float, mu: float) -> float:
    """Slowest decay rate min |Re lambda| of the pair at frequency xi."""
    lams = constant_coeff_spectrum(xi, nu, mu)[pair]
    return min(-lam.real for lam in lams)


def pair_matrix(pair: str, s, nu: float, mu: float):
    """Entries (a, b, c, d) of the pair's 2x2 generator at |xi| = s.

    Works elementwise on arrays of s.  Variable order is (rho, d),
    (Omega, W) and (potential, d) respectively.
    """
    s = np.asarray(s, dtype=np.float64)
    z = np.zeros_like(s)
    if pair == "rho_d":
        return z, -s, 2.0 * s, -nu * s ** 2
    if pair == "omega_w":
        return -mu * s ** 2, s, -s, z
    if pair == "potential_d":
        return z, -2.0 * s, 2.0 * s, -nu * s ** 2
    raise InputError(f"unknown pair {pair!r}")


def expm2(a, b, c, d, t: float):
    """exp(t*[[a,b],[c,d]]) for elementwise array entries, overflow-safe.

    Uses exp of the two eigenvalues directly, so decaying systems never
    evaluate a growing cosh; the defective (double-root) case is handled by
    the sinh(x)/x limit.
    """
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    c = np.asarray(c, dtype=np.complex128)
    d = np.asarray(d, dtype=np.complex128)
    half_tr = 0.5 * (a + d)
    delta = np.sqrt(0.25 * (a - d) ** 2 + b * c)
    ep = np.exp((half_tr + delta) * t)
    em = np.exp((half_tr - delta) * t)
    cosh_term = 0.5 * (ep + em)
    small = np.abs(delta * t) < 1e-8
    safe = np.where(small, 1.0, delta)
    sinh_term = np.where(small,
                         t * np.exp(half_tr * t) * (1.0 + (delta * t) ** 2 / 6.0),
                         (ep - em) / (2.0 * safe))
    return (cosh_term + (a - half_tr) * sinh_term, b * sinh_term,
            c * sinh_term, cosh_term + (d - half_tr) * sinh_term)


def evolve_pair_exact(x: SpectralField, y: SpectralField, pair: str,
                      visc, t: float):
    """Advance a seeded pair by the exact per-mode propagator.

    Exact per Fourier mode (the free system is constant-coefficient mode by
    mode), so rate fits carry no time-discretization error.
    """
    g = x.grid
    a, b, c, d = pair_matrix(pair, g.xi_mag, visc.nu, visc.mu)
    m11, m12, m21, m22 = expm2(a, b, c, d, t)
    mask = g.keep_mask & (g.xi_mag > 0)
    x2 = SpectralField(g, (m11 * x.coeff + m12 * y.coeff) * mask)
    y2 = SpectralField(g, (m21 * x.coeff + m22 * y.coeff) * mask)
    return x2, y2


# ----------------------------------------------------------------------
# decay measurement
# ----------------------------------------------------------------------

def measure_block_decay(times, values, fit_start_frac: float = 0.5,
                        min_samples: int = 20) -> float:
    """Fitted exponential decay rate from a positive time series.

    Least-squares slope of log(values) over the trailing window; the
    leading part is skipped so slave modes and defective-root transients do
    not bias the fit.  Raises if fewer than ``min_samples`` usable points
    remain or they span less than one e-fold.
    """
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    start = int(len(times) * fit_start_frac)
    t, v = times[start:], values[start:]
    ok = v > 1e-290
    t, v = t[ok], v[ok]
    if len(t) < min_samples:
        raise DiagnosticError(f"only {len(t)} usable samples for the rate fit")
    logv = np.log(v)
    if logv.max() - logv.min() < 1.0:
        raise DiagnosticError("fit window spans less than one e-fold")
    slope = np.polyfit(t, logv, 1)[0]
    return -float(slope)


def pair_state(grid: Grid, kvec, amplitude: float = 1.0):
    """Seed (x, y) scalar coefficient fields for one pair at a single mode."""
    from .grid import cosine_mode
    x = cosine_mode(grid, kvec, amplitude)
    y = cosine_mode(grid, kvec, amplitude, phase="sin")
    return x, y


def _assemble_state(grid: Grid, pair: str, x: SpectralField, y: SpectralField) -> HelmholtzState:
    zero_s = SpectralField.zeros(grid, "scalar")
    zero_m = SpectralField.zeros(grid, "matrix")
    if pair == "rho_d":
        return HelmholtzState(x, y, zero_m.copy(), zero_m.copy(), zero_s.copy())
    if pair == "potential_d":
        return HelmholtzState(zero_s.copy(), y, zero_m.copy(), zero_m.copy(), x)
    om = SpectralField.zeros(grid, "matrix")
    sk = SpectralField.zeros(grid, "matrix")
    om.coeff[0, 1], om.coeff[1, 0] = x.coeff, -x.coeff
    sk.coeff[0, 1], sk.coeff[1, 0] = y.coeff, -y.coeff
    return HelmholtzState(zero_s.copy(), zero_s.copy(), om, sk, zero_s.copy())


def run_pair_decay(grid: Grid, pair: str, kvec, visc,
                   consts: EnergyConstants | None = None,
                   n_samples: int = 600, horizon_efolds: float = 96.0) -> dict:
    """Free-decay run of one pair seeded at a single mode, with rate fit.

    The trajectory is sampled from the exact propagator; the fitted rate of
    the block energy at the seeded frequency is compared with the oracle.
    """
    consts = consts or EnergyConstants(visc.nu, visc.mu)
    fam = DyadicFamily(grid)
    xi = float(np.sqrt(sum((k / grid.length) ** 2 for k in kvec)))
    oracle = oracle_decay_rate(pair, xi, visc.nu, visc.mu)
    t_final = horizon_efolds / oracle
    x0, y0 = pair_state(grid, kvec)
    q_seed = int(np.round(np.log2(xi)))
    times = np.linspace(0.0, t_final, n_samples)
    series = np.empty(n_samples)
    for i, t in enumerate(times):
        x, y = evolve_pair_exact(x0, y0, pair, visc, float(t))
        state = _assemble_state(grid, pair, x, y)
        series[i] = block_energy(state, q_seed, consts, fam)
    rate = measure_block_decay(times, series)
    return {"pair": pair, "xi": xi, "q": q_seed, "fitted": rate, "oracle": oracle,
            "rel_error": abs(rate - oracle) / oracle, "times": times, "energy": series}


# ----------------------------------------------------------------------
# convection-weighted damping
# ----------------------------------------------------------------------

class VelocityWeight:
    """Accumulates V(t) = int ||u||_{B^{N/2+1}} dt and applies exp(-K V).

    The reweighting is the bookkeeping device that absorbs convection in the
    energy estimates; K is a configuration value compared against the
    measured interaction constant, never assumed.
    """

    def __init__(self, K: float, fam: DyadicFamily):
        self.K = K
        self.fam = fam
        self.V = 0.0
        self._last = None

    def update(self, t: float, u: SpectralField) -> float:
        norm = besov_norm(u, u.grid.dim / 2.0 + 1.0, self.fam)
        if self._last is not None:
            t0, n0 = self._last
            if t < t0:
                raise InputError("times must be nondecreasing")
            self.V += 0.5 * (t - t0) * (n0 + norm)
        self._last = (t, norm)
        return self.V

    def apply(self, state: HelmholtzState) -> HelmholtzState:
        w = math.exp(-self.K * self.V)
        return HelmholtzState(*(SpectralField(f.grid, f.coeff * w) for f in
                                (state.rho, state.d, state.omega, state.skew, state.potential)))
