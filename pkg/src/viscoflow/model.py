"""Physical model: pressure law, nondimensionalized perturbation states, and
assembly of every right-hand side of the near-equilibrium system.

Two equivalent evolution paths are provided:

* ``primitive_rhs`` -- the direct system in (density perturbation, velocity,
  deformation perturbation);
* ``reformulated_rhs`` -- the Helmholtz-split system in (rho, d, Omega, E),
  whose compressible/rotational equations absorb the deformation coupling
  through the divergence and curl structure of the constraint manifold.

On data satisfying the deformation constraints the two paths produce the
same time derivatives of (rho, d, Omega, E^T - E, symmetric scalar); off the
constraint manifold they differ, and that gap is itself a diagnostic.

The elastic coupling a = alpha / P'(1) is kept general (a = 1 recovers the
usual normalization); the linear-system module always works at a = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, StabilityError
from .grid import Grid, SpectralField, dealiased_product
from .operators import (Viscosity, convect, divergence, double_divergence,
                        fractional_power, gradient, helmholtz_reconstruct,
                        helmholtz_split, jacobian, lame_operator, laplacian,
                        matrix_product, symmetric_scalar, transpose_gap,
                        _deriv_mult)

RHO_SUP_LIMIT = 0.5  # composition terms need the density perturbation below this


# ----------------------------------------------------------------------
# pressure law
# ----------------------------------------------------------------------

class PressureLaw:
    """Barotropic pressure with the derived constants used downstream.

    ``chi0 = P'(1)^(-1/2)`` rescales time and space in the
    nondimensionalization; ``deviation(r)`` is the normalized pressure
    nonlinearity P'(1+r)/((1+r) P'(1)) - 1, which vanishes identically for
    the quadratic reference law.
    """

    def __init__(self, name: str, p, dp):
        self.name = name
        self.p = p
        self.dp = dp
        dp1 = float(dp(1.0))
        if dp1 <= 0.0:
            raise InputError("pressure law must have P'(1) > 0")
        self.dp1 = dp1
        self.chi0 = dp1 ** -0.5

    @classmethod
    def quadratic(cls) -> "PressureLaw":
        return cls("quadratic", lambda x: x ** 2, lambda x: 2.0 * x)

    @classmethod
    def power(cls, gamma_gas: float) -> "PressureLaw":
        if gamma_gas <= 0.0:
            raise InputError("gas exponent must be positive")
        return cls(f"power({gamma_gas})",
                   lambda x, g=gamma_gas: x ** g,
                   lambda x, g=gamma_gas: g * x ** (g - 1.0))

    def deviation(self, r: np.ndarray) -> np.ndarray:
        """K(r) = P'(1+r)/((1+r) P'(1)) - 1, evaluated pointwise."""
        one_plus = 1.0 + r
        return self.dp(one_plus) / (one_plus * self.dp1) - 1.0


@dataclass(frozen=True)
class ModelParams:
    """Viscosities, elastic coupling, and pressure law for one run."""
    visc: Viscosity
    alpha: float = 1.0
    pressure: PressureLaw = field(default_factory=PressureLaw.quadratic)

    @property
    def coupling(self) -> float:
        """Elastic coupling a = alpha / P'(1)."""
        return self.alpha / self.pressure.dp1

    @property
    def nu(self) -> float:
        return self.visc.nu

    @property
    def mu(self) -> float:
        return self.visc.mu


# ----------------------------------------------------------------------
# states
# ----------------------------------------------------------------------

@dataclass
class PrimitiveState:
    """Perturbation variables (density - 1, velocity, deformation - I)."""
    rho: SpectralField
    u: SpectralField
    E: SpectralField

    def copy(self):
        return PrimitiveState(self.rho.copy(), self.u.copy(), self.E.copy())

    def check_density(self, limit: float = 1.0):
        sup = float(np.max(np.abs(self.rho.to_physical())))
        if sup >= limit:
            raise StabilityError(f"density perturbation sup {sup:.3g} >= {limit}")
        return sup


@dataclass
class HelmholtzState:
    """Split variables: rho, compressible d, rotational Omega, the
    antisymmetric record E^T - E, and the symmetric-part scalar."""
    rho: SpectralField
    d: SpectralField
    omega: SpectralField
    skew: SpectralField
    potential: SpectralField

    def copy(self):
        return HelmholtzState(*(f.copy() for f in
                                (self.rho, self.d, self.omega, self.skew, self.potential)))

    def l2(self) -> float:
        return float(np.sqrt(sum(f.l2() ** 2 for f in
                                 (self.rho, self.d, self.omega, self.skew, self.potential))))


@dataclass
class SourceTerms:
    """Frozen-state source fields of the auxiliary linear system."""
    mass: SpectralField              # density equation
    compressible: SpectralField      # d equation, density-coupled form
    rotational: SpectralField        # Omega equation (antisymmetric)
    skew: SpectralField              # (E^T - E) equation (antisymmetric)
    potential: SpectralField         # symmetric-scalar equation
    compressible_alt: SpectralField  # d equation, potential-coupled form
    stretch: SpectralField           # grad(u) E, the full deformation source


def split_state(prim: PrimitiveState) -> HelmholtzState:
    d, om = helmholtz_split(prim.u)
    return HelmholtzState(prim.rho.copy(), d, om,
                          transpose_gap(prim.E), symmetric_scalar(prim.E))


# ----------------------------------------------------------------------
# nondimensionalization and energy
# ----------------------------------------------------------------------

def nondimensionalize(rho_hat: SpectralField, u_hat: SpectralField,
                      F: SpectralField, law: PressureLaw,
                      alpha: float, mu: float, lam: float):
    """Rescale (density, velocity, deformation) to perturbation form.

    Space and time contract by chi0 = P'(1)^(-1/2); on the torus this turns
    a domain of scale L into one of scale L/chi0 while the samples are
    reused verbatim.  The velocity picks up the factor chi0 and the elastic
    terms the coupling a = alpha/P'(1).
    """
    vals = rho_hat.to_physical()
    if np.min(vals) <= 0.0:
        raise InputError("density must be positive pointwise")
    old = rho_hat.grid
    new_grid = Grid(old.dim, old.n, old.length / law.chi0, old.dealias_frac)
    rho = SpectralField(new_grid, rho_hat.coeff.copy())
    rho.coeff[(Ellipsis,) + (0,) * old.dim] -= 1.0
    u = SpectralField(new_grid, law.chi0 * u_hat.coeff.copy())
    E = SpectralField(new_grid, F.coeff.copy())
    for i in range(old.dim):
        E.coeff[(i, i) + (0,) * old.dim] -= 1.0
    params = ModelParams(Viscosity(mu, lam, old.dim), alpha, law)
    return PrimitiveState(rho, u, E), params


def elastic_energy(F: SpectralField, alpha: float = 1.0) -> float:
    """Grid-averaged Hookean energy (alpha/2) |F|^2 of the full deformation."""
    vals = F.to_physical()
    return 0.5 * alpha * float(np.mean(np.sum(vals * vals, axis=(0, 1))))


# ----------------------------------------------------------------------
# shared nonlinear blocks
# ----------------------------------------------------------------------

def _composition_weight(rho: SpectralField) -> np.ndarray:
    vals = rho.to_physical()
    sup = float(np.max(np.abs(vals)))
    if sup > RHO_SUP_LIMIT:
        raise StabilityError(
            f"density perturbation sup {sup:.3g} > {RHO_SUP_LIMIT}; left the small-data regime")
    return vals


def _deformation_drag(E: SpectralField, E_phys, dE_phys) -> SpectralField:
    """Vector E_{jk} d_j E_{ik}, dealiased."""
    vals = np.einsum("jk...,jik...->i...", E_phys, dE_phys)
    return SpectralField.from_physical(E.grid, vals).dealias()


def _grad_components(E: SpectralField) -> np.ndarray:
    """Physical samples of d_l E_{ij}, indexed [l, i, j]."""
    g = E.grid
    dE = np.empty((g.dim, g.dim, g.dim) + (g.n,) * g.dim, dtype=np.complex128)
    for l in range(g.dim):
        dE[l] = E.coeff * _deriv_mult(g, l)
    axes = tuple(range(3, 3 + g.dim))
    return np.fft.ifftn(dE, axes=axes).real * g.n_points


def rotation_correction(E: SpectralField) -> SpectralField:
    """Antisymmetric quadratic correction in the rotational equation.

    S_{ij} = |grad|^{-1} d_k (B_{ijk} - B_{jik}) with
    B_{ijk} = E_{lk} d_l E_{ij} - E_{lj} d_l E_{ik}.
    """
    g = E.grid
    E_phys = E.to_physical()
    dE = _grad_components(E)
    B = (np.einsum("lk...,lij...->ijk...", E_phys, dE)
         - np.einsum("lj...,lik...->ijk...", E_phys, dE))
    axes = tuple(range(3, 3 + g.dim))
    Bh = np.fft.fftn(B, axes=axes) / g.n_points
    Bh *= g.dealias_mask
    out = np.zeros((g.dim, g.dim) + (g.n,) * g.dim, dtype=np.complex128)
    for i in range(g.dim):
        for j in range(g.dim):
            acc = sum((Bh[i, j, k] - Bh[j, i, k]) * _deriv_mult(g, k)
                      for k in range(g.dim))
            out[i, j] = acc * g.inv_xi
    return SpectralField(g, out)


def quad_reduce(M: SpectralField) -> SpectralField:
    """|grad|^{-2} d_i d_j M_{ij}, the scalar reduction used by the
    symmetric-part bookkeeping."""
    g = M.grid
    acc = np.zeros(M.coeff.shape[2:], dtype=np.complex128)
    for i in range(g.dim):
        for j in range(g.dim):
            acc += M.coeff[i, j] * _deriv_mult(g, i) * _deriv_mult(g, j)
    return SpectralField(g, acc * g.inv_xi ** 2)


def _common_vector(prim: PrimitiveState, params: ModelParams,
                   u_phys, rho_phys, E_phys, dE_phys) -> SpectralField:
    """u.grad u + K(rho) grad rho + (rho/(1+rho)) A u - a E_{jk} d_j E_{ik}."""
    g = prim.rho.grid
    a = params.coupling
    out = convect(prim.u, prim.u, u_phys)
    kvals = params.pressure.deviation(rho_phys)
    grad_rho = gradient(prim.rho).to_physical()
    out = out + SpectralField.from_physical(g, kvals * grad_rho).dealias()
    w = rho_phys / (1.0 + rho_phys)
    au = lame_operator(prim.u, params.visc).to_physical()
    out = out + SpectralField.from_physical(g, w * au).dealias()
    out = out - a * _deformation_drag(prim.E, E_phys, dE_phys)
    return out


# ----------------------------------------------------------------------
# right-hand sides
# ----------------------------------------------------------------------

def primitive_rhs(prim: PrimitiveState, params: ModelParams) -> PrimitiveState:
    """Direct evolution of (rho, u, E); all products dealiased."""
    g = prim.rho.grid
    a = params.coupling
    rho_phys = _composition_weight(prim.rho)
    u_phys = prim.u.to_physical()
    E_phys = prim.E.to_physical()
    dE = _grad_components(prim.E)

    div_u = divergence(prim.u)
    rho_dot = (-convect(prim.u, prim.rho, u_phys) - div_u
               - dealiased_product(prim.rho, div_u))

    au = lame_operator(prim.u, params.visc)
    w = rho_phys / (1.0 + rho_phys)
    drag = _deformation_drag(prim.E, E_phys, dE)
    kvals = params.pressure.deviation(rho_phys)
    grad_rho = gradient(prim.rho)
    u_dot = (-convect(prim.u, prim.u, u_phys) + au - grad_rho
             + a * divergence(prim.E) + a * drag
             - SpectralField.from_physical(g, w * au.to_physical()).dealias()
             - SpectralField.from_physical(g, kvals * grad_rho.to_physical()).dealias())

    jac = jacobian(prim.u)
    E_dot = -convect(prim.u, prim.E, u_phys) + jac + matrix_product(jac, prim.E)

    return PrimitiveState(rho_dot.project_mean_zero(),
                          u_dot.project_mean_zero(),
                          E_dot.project_mean_zero())


@dataclass
class ReformState:
    """State advanced by the split path: (rho, d, Omega, E).

    The antisymmetric record and the symmetric scalar are derived fields;
    their displayed evolutions follow identically from the E equation.
    """
    rho: SpectralField
    d: SpectralField
    omega: SpectralField
    E: SpectralField

    @classmethod
    def from_primitive(cls, prim: PrimitiveState) -> "ReformState":
        d, om = helmholtz_split(prim.u)
        return cls(prim.rho.copy(), d, om, prim.E.copy())

    def velocity(self) -> SpectralField:
        return helmholtz_reconstruct(self.d, self.omega)

    def to_primitive(self) -> PrimitiveState:
        return PrimitiveState(self.rho.copy(), self.velocity(), self.E.copy())

    def helmholtz(self) -> HelmholtzState:
        return HelmholtzState(self.rho.copy(), self.d.copy(), self.omega.copy(),
                              transpose_gap(self.E), symmetric_scalar(self.E))

    def copy(self):
        return ReformState(self.rho.copy(), self.d.copy(),
                           self.omega.copy(), self.E.copy())


def reformulated_rhs(state: ReformState, params: ModelParams,
                     include_rotation_correction: bool = True) -> ReformState:
    """Evolution of (rho, d, Omega, E) in the split formulation.

    The d equation carries the (1+a) density coupling produced by folding
    the double-divergence of the deformation into the density gradient; the
    Omega equation carries the antisymmetric part plus (optionally) the
    quadratic rotation correction, which belongs to the exact system but is
    absent from the frozen-coefficient iteration sources.
    """
    g = state.rho.grid
    a = params.coupling
    u = state.velocity()
    prim = PrimitiveState(state.rho, u, state.E)
    rho_phys = _composition_weight(state.rho)
    u_phys = u.to_physical()
    E_phys = state.E.to_physical()
    dE = _grad_components(state.E)

    div_u = divergence(u)
    rho_dot = (-fractional_power(state.d, 1.0)
               - dealiased_product(state.rho, div_u)
               - convect(u, state.rho, u_phys))

    G = _common_vector(prim, params, u_phys, rho_phys, E_phys, dE)
    rho_E = _scalar_matrix(state.rho, state.E)
    d_dot = ((1.0 + a) * fractional_power(state.rho, 1.0)
             + params.nu * laplacian(state.d)
             - _inv_div(G + a * divergence(rho_E)))

    skew = transpose_gap(state.E)
    om_dot = (params.mu * laplacian(state.omega)
              + a * fractional_power(skew, 1.0)
              - _inv_curl(G))
    if include_rotation_correction:
        om_dot = om_dot + a * rotation_correction(state.E)

    jac = jacobian(u)
    E_dot = -convect(u, state.E, u_phys) + jac + matrix_product(jac, state.E)

    return ReformState(rho_dot.project_mean_zero(), d_dot.project_mean_zero(),
                       om_dot.project_mean_zero(), E_dot.project_mean_zero())


def _scalar_matrix(s: SpectralField, M: SpectralField) -> SpectralField:
    vals = s.to_physical() * M.to_physical()
    return SpectralField.from_physical(M.grid, vals).dealias()


def _inv_div(v: SpectralField) -> SpectralField:
    """|grad|^{-1} div of a vector."""
    return SpectralField(v.grid, divergence(v).coeff * v.grid.inv_xi)


def _inv_curl(v: SpectralField) -> SpectralField:
    """|grad|^{-1} curl of a vector (antisymmetric matrix)."""
    from .operators import curl_matrix
    return SpectralField(v.grid, curl_matrix(v).coeff * v.grid.inv_xi)


# ----------------------------------------------------------------------
# frozen-state sources of the linear iteration
# ----------------------------------------------------------------------

def assemble_sources(prim: PrimitiveState, params: ModelParams) -> SourceTerms:
    """All source fields evaluated at one frozen state.

    Every product is dealiased, compositions are evaluated pointwise in
    physical space, and the antisymmetric sources are antisymmetric by
    construction.  Requires the density perturbation below 1/2 in sup norm.
    """
    g = prim.rho.grid
    a = params.coupling
    rho_phys = _composition_weight(prim.rho)
    u_phys = prim.u.to_physical()
    E_phys = prim.E.to_physical()
    dE = _grad_components(prim.E)
    d, om = helmholtz_split(prim.u)

    mass = -dealiased_product(prim.rho, divergence(prim.u))

    G = _common_vector(prim, params, u_phys, rho_phys, E_phys, dE)
    rho_E = _scalar_matrix(prim.rho, prim.E)
    div_rho_E = divergence(rho_E)
    compressible = convect(prim.u, d, u_phys) - _inv_div(G + a * div_rho_E)
    compressible_alt = convect(prim.u, d, u_phys) - _inv_div(G - div_rho_E)

    rotational = convect(prim.u, om, u_phys) - _inv_curl(G)

    stretch = matrix_product(jacobian(prim.u), prim.E)
    skew_src = transpose_gap(stretch)

    pot = symmetric_scalar(prim.E)
    sym_stretch = SpectralField(g, stretch.coeff + np.swapaxes(stretch.coeff, 0, 1))
    conv_E = convect(prim.u, prim.E, u_phys)
    sym_conv = SpectralField(g, conv_E.coeff + np.swapaxes(conv_E.coeff, 0, 1))
    potential = (convect(prim.u, pot, u_phys)
                 - quad_reduce(sym_conv) + quad_reduce(sym_stretch))

    fields = [mass, compressible, rotational, skew_src, potential, compressible_alt, stretch]
    fields = [f.project_mean_zero() for f in fields]
    return SourceTerms(*fields)


def compatibility_residual(prim: PrimitiveState, params: ModelParams,
                           sources: SourceTerms | None = None) -> SpectralField:
    """Field residual of the constraint linking the two d-equation forms.

    Equals (1+a) * [lam rho + M-source - lam potential/2 - J-source] ... i.e.
    (1+a)*lam(rho) + M - (1+a)*lam(potential)/2 - J, which vanishes (at
    discretization level) exactly when the double divergence of the full
    deformation balances the density gradient.  Note the potential enters
    through half the symmetric scalar: the summed-index definition double
    counts the symmetric part, and it is the half-normalized scalar whose
    gradient matches the double divergence.
    """
    if sources is None:
        sources = assemble_sources(prim, params)
    a = params.coupling
    lam_rho = fractional_power(prim.rho, 1.0)
    half_pot = 0.5 * symmetric_scalar(prim.E)
    lam_pot = fractional_power(half_pot, 1.0)
    return ((1.0 + a) * lam_rho + sources.compressible
            - (1.0 + a) * lam_pot - sources.compressible_alt)


def deformation_identity_gap(prim: PrimitiveState) -> SpectralField:
    """Residual of the double-divergence identity
    T(E) - lam(rho) + |grad|^{-1} div div(rho E); zero on admissible data."""
    rho_E = _scalar_matrix(prim.rho, prim.E)
    return (double_divergence(prim.E) - fractional_power(prim.rho, 1.0)
            + double_divergence(rho_E))


def dual_path_gap(prim: PrimitiveState, params: ModelParams,
                  include_rotation_correction: bool = True) -> dict:
    """Compare d/dt of (rho, d, Omega, skew, potential) between the two paths.

    Returns absolute gaps and the relative gap against the primitive-path
    derivative magnitudes.  Small only on constraint-satisfying data.
    """
    pdot = primitive_rhs(prim, params)
    d_dot_a, om_dot_a = helmholtz_split(pdot.u.project_mean_zero())
    skew_dot_a = transpose_gap(pdot.E)
    pot_dot_a = symmetric_scalar(pdot.E)

    ref = ReformState.from_primitive(prim)
    rdot = reformulated_rhs(ref, params, include_rotation_correction)
    skew_dot_b = transpose_gap(rdot.E)
    pot_dot_b = symmetric_scalar(rdot.E)

    gaps = {
        "rho": (pdot.rho - rdot.rho).l2(),
        "d": (d_dot_a - rdot.d).l2(),
        "omega": (om_dot_a - rdot.omega).l2(),
        "skew": (skew_dot_a - skew_dot_b).l2(),
        "potential": (pot_dot_a - pot_dot_b).l2(),
    }
    scale = np.sqrt(pdot.rho.l2() ** 2 + d_dot_a.l2() ** 2 + om_dot_a.l2() ** 2
                    + skew_dot_a.l2() ** 2 + pot_dot_a.l2() ** 2)
    gaps["relative"] = float(np.sqrt(sum(v * v for v in
                                         (gaps["rho"], gaps["d"], gaps["omega"],
                                          gaps["skew"], gaps["potential"]))) / max(scale, 1e-300))
    return gaps
