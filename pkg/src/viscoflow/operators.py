"""Fourier-multiplier calculus: fractional powers, Helmholtz split, Lame
operator, double-divergence/curl reductions, and the symmetric-part scalar.

Conventions (fixed package-wide):

* Jacobian (grad u)_{ij} = d_j u_i.
* Matrix divergence is taken along rows: (div E)_i = d_j E_{ij}.
* curl of a vector is the antisymmetric matrix (curl u)_{ij} = d_j u_i - d_i u_j;
  the adjoint-type curl of an antisymmetric matrix is the vector
  (curl Om)_i = d_j Om_{ji}, so that split/reconstruct is an exact involution
  and div u = lam d, curl u = lam Om hold as identities (lam = |grad|).

All operators are diagonal in Fourier space, hence commute with each other
and with dyadic blocks exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError
from .grid import Grid, SpectralField


def _deriv_mult(grid: Grid, axis: int):
    return 1j * grid.xi_axes[axis]


def derivative(f: SpectralField, axis: int) -> SpectralField:
    return SpectralField(f.grid, f.coeff * _deriv_mult(f.grid, axis))


def gradient(f: SpectralField) -> SpectralField:
    """Scalar -> vector of partial derivatives."""
    g = f.grid
    out = np.empty((g.dim,) + f.coeff.shape, dtype=np.complex128)
    for ax in range(g.dim):
        out[ax] = f.coeff * _deriv_mult(g, ax)
    return SpectralField(g, out)


def jacobian(u: SpectralField) -> SpectralField:
    """Vector -> matrix J_{ij} = d_j u_i."""
    g = u.grid
    out = np.empty((g.dim, g.dim) + u.coeff.shape[1:], dtype=np.complex128)
    for i in range(g.dim):
        for j in range(g.dim):
            out[i, j] = u.coeff[i] * _deriv_mult(g, j)
    return SpectralField(g, out)


def divergence(f: SpectralField) -> SpectralField:
    """Vector -> scalar, or matrix -> vector (row divergence)."""
    g = f.grid
    if f.rank == "vector":
        out = sum(f.coeff[j] * _deriv_mult(g, j) for j in range(g.dim))
        return SpectralField(g, out)
    if f.rank == "matrix":
        out = np.empty((g.dim,) + f.coeff.shape[2:], dtype=np.complex128)
        for i in range(g.dim):
            out[i] = sum(f.coeff[i, j] * _deriv_mult(g, j) for j in range(g.dim))
        return SpectralField(g, out)
    raise InputError("divergence needs a vector or matrix field")


def curl_matrix(u: SpectralField) -> SpectralField:
    """Vector -> antisymmetric matrix C_{ij} = d_j u_i - d_i u_j."""
    g = u.grid
    out = np.zeros((g.dim, g.dim) + u.coeff.shape[1:], dtype=np.complex128)
    for i in range(g.dim):
        for j in range(g.dim):
            if i != j:
                out[i, j] = u.coeff[i] * _deriv_mult(g, j) - u.coeff[j] * _deriv_mult(g, i)
    return SpectralField(g, out)


def curl_vector(om: SpectralField) -> SpectralField:
    """Antisymmetric matrix -> vector v_i = d_j Om_{ji}."""
    g = om.grid
    out = np.empty((g.dim,) + om.coeff.shape[2:], dtype=np.complex128)
    for i in range(g.dim):
        out[i] = sum(om.coeff[j, i] * _deriv_mult(g, j) for j in range(g.dim))
    return SpectralField(g, out)


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, -f.grid.xi_sq * f.coeff)


def fractional_power(f: SpectralField, s: float) -> SpectralField:
    """Apply |grad|^s: coefficient at k is scaled by (|k|/L)^s.

    Negative powers require a mean-zero field; the mean mode of the result
    is always zero.
    """
    g = f.grid
    if s == 0.0:
        return f.copy()
    if s < 0.0 and np.max(np.abs(f.mean_values())) > 1e-13 * (f.l2() + 1e-300):
        raise InputError("negative fractional power needs a mean-zero field")
    with np.errstate(divide="ignore"):
        mult = np.where(g.xi_mag > 0.0, g.xi_mag, 1.0) ** s
    mult = np.where(g.xi_mag > 0.0, mult, 0.0)
    return SpectralField(g, f.coeff * mult)


def inverse_mag_times(f: SpectralField) -> SpectralField:
    """|grad|^{-1} f with the mean mode dropped (used by split/reductions)."""
    return SpectralField(f.grid, f.coeff * f.grid.inv_xi)


# ----------------------------------------------------------------------
# Helmholtz decomposition
# ----------------------------------------------------------------------

def helmholtz_split(u: SpectralField):
    """Vector -> (compressible scalar d, incompressible antisymmetric Om).

    d = |grad|^{-1} div u and Om = |grad|^{-1} curl u, so div u = lam d and
    curl u = lam Om hold exactly on the grid.
    """
    if np.max(np.abs(u.mean_values())) > 1e-13 * (u.l2() + 1e-300):
        raise InputError("helmholtz_split needs a mean-zero velocity")
    d = inverse_mag_times(divergence(u))
    om = inverse_mag_times(curl_matrix(u))
    return d, om


def helmholtz_reconstruct(d: SpectralField, om: SpectralField) -> SpectralField:
    """Inverse of the split: u = -|grad|^{-1} grad d + |grad|^{-1} curl Om."""
    grad_part = inverse_mag_times(gradient(d))
    curl_part = inverse_mag_times(curl_vector(om))
    return SpectralField(d.grid, -grad_part.coeff + curl_part.coeff)


# ----------------------------------------------------------------------
# Lame operator and the deformation reductions
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Viscosity:
    """Shear/bulk viscosity pair with the ellipticity condition enforced."""
    mu: float
    lam: float
    dim: int

    def __post_init__(self):
        if self.mu <= 0.0 or 2.0 * self.mu + self.dim * self.lam <= 0.0:
            raise ConfigurationError(
                f"need mu > 0 and 2*mu + N*lambda > 0, got mu={self.mu}, lambda={self.lam}")

    @property
    def nu(self) -> float:
        """Longitudinal coefficient lambda + 2*mu."""
        return self.lam + 2.0 * self.mu


@dataclass(frozen=True)
class SplitViscosity:
    """Damping pair (nu, mu) of the split system, taken as free parameters.

    The auxiliary linear system sees only the longitudinal and transverse
    coefficients; studying it at, say, nu = mu does not require a Lame pair
    behind them (in 2-D strict ellipticity would force nu > mu).
    """
    nu: float
    mu: float

    def __post_init__(self):
        if self.nu <= 0.0 or self.mu <= 0.0:
            raise ConfigurationError("both damping coefficients must be positive")


def lame_operator(u: SpectralField, visc: Viscosity) -> SpectralField:
    """Elliptic viscosity operator mu*Lap + (lambda+mu)*grad div on vectors."""
    g = u.grid
    div_u = sum(u.coeff[j] * _deriv_mult(g, j) for j in range(g.dim))
    out = np.empty_like(u.coeff)
    for i in range(g.dim):
        out[i] = -visc.mu * g.xi_sq * u.coeff[i] + (visc.lam + visc.mu) * _deriv_mult(g, i) * div_u
    return SpectralField(g, out)


def double_divergence(E: SpectralField) -> SpectralField:
    """|grad|^{-1} div div E, a scalar first-order reduction of a matrix."""
    g = E.grid
    acc = np.zeros(E.coeff.shape[2:], dtype=np.complex128)
    for i in range(g.dim):
        for j in range(g.dim):
            acc += E.coeff[i, j] * _deriv_mult(g, i) * _deriv_mult(g, j)
    return SpectralField(g, acc * g.inv_xi)


def curl_divergence(E: SpectralField) -> SpectralField:
    """|grad|^{-1} curl div E, an antisymmetric matrix reduction."""
    g = E.grid
    div_e = divergence(E)
    out = np.zeros_like(E.coeff)
    for i in range(g.dim):
        for j in range(g.dim):
            if i != j:
                out[i, j] = (div_e.coeff[i] * _deriv_mult(g, j)
                             - div_e.coeff[j] * _deriv_mult(g, i)) * g.inv_xi
    return SpectralField(g, out)


def symmetric_scalar(E: SpectralField) -> SpectralField:
    """Scalar potential of the symmetric part:
    |grad|^{-1} d_i |grad|^{-1} d_j (E_{ij} + E_{ji}), indices summed.

    Antisymmetric input gives exactly zero; together with E - E^T this
    scalar controls the full matrix in every block norm.
    """
    g = E.grid
    acc = np.zeros(E.coeff.shape[2:], dtype=np.complex128)
    for i in range(g.dim):
        for j in range(g.dim):
            acc += (E.coeff[i, j] + E.coeff[j, i]) * _deriv_mult(g, i) * _deriv_mult(g, j)
    return SpectralField(g, acc * g.inv_xi ** 2)


def transpose_gap(E: SpectralField) -> SpectralField:
    """Antisymmetric part record E^T - E."""
    return SpectralField(E.grid, np.swapaxes(E.coeff, 0, 1) - E.coeff)


# ----------------------------------------------------------------------
# dealiased nonlinear contractions
# ----------------------------------------------------------------------

def convect(u: SpectralField, f: SpectralField,
            u_phys: np.ndarray | None = None) -> SpectralField:
    """Dealiased transport term u . grad f for f of any rank."""
    g = u.grid
    if u_phys is None:
        u_phys = u.to_physical()
    acc = None
    for j in range(g.dim):
        dj = SpectralField(g, f.coeff * _deriv_mult(g, j)).to_physical()
        acc = u_phys[j] * dj if acc is None else acc + u_phys[j] * dj
    return SpectralField.from_physical(g, acc).dealias()


def matrix_product(A: SpectralField, B: SpectralField) -> SpectralField:
    """Dealiased matrix product (A B)_{ij} = A_{ik} B_{kj}."""
    g = A.grid
    a = A.to_physical()
    b = B.to_physical()
    vals = np.einsum("ik...,kj...->ij...", a, b)
    return SpectralField.from_physical(g, vals).dealias()


def pointwise(grid: Grid, values: np.ndarray) -> SpectralField:
    """Wrap physical-space values (e.g. compositions) as a dealiased field."""
    return SpectralField.from_physical(grid, values).dealias()
