"""Periodic collar lattice and its discrete operators.

The boundary is a d-torus lattice; the collar adds a time axis of n_t
slices with spacing dt.  Fields are arrays whose FIRST axis enumerates
lattice sites in fixed lexicographic order (row-major over the grid), so
reductions are bit-reproducible.  Trailing axes carry component and
algebra indices.

The covariant derivative d_a and its adjoint d_a_star satisfy

    <p, d_a xi> + <d_a_star(a, p), xi> = 0

exactly (up to roundoff): central differences are skew-adjoint on the
torus and the pairing form is ad-invariant, so the closed-form adjoint
below IS the transpose of d_a with respect to the discrete pairing.
"""

from dataclasses import dataclass

import numpy as np

from .algebra import bracket, pair as algebra_pair


@dataclass(eq=False)
class CollarMesh:
    """Spatial d-torus lattice plus a collar time axis.

    sites_per_dim are the lattice extents (each >= 3), h the spacings,
    n_t the number of time slices, dt the time step.  Immutable.
    """

    d: int
    sites_per_dim: tuple
    h: tuple
    n_t: int
    dt: float

    def __post_init__(self):
        self.sites_per_dim = tuple(int(s) for s in np.atleast_1d(self.sites_per_dim))
        if len(self.sites_per_dim) == 1 and self.d > 1:
            self.sites_per_dim = self.sites_per_dim * self.d
        h = np.atleast_1d(self.h).astype(float)
        if h.size == 1 and self.d > 1:
            h = np.repeat(h, self.d)
        self.h = tuple(h)
        if len(self.sites_per_dim) != self.d or len(self.h) != self.d:
            raise ValueError("sites_per_dim / h length must equal d")
        if any(s < 3 for s in self.sites_per_dim):
            raise ValueError("need at least 3 sites per dimension")
        if any(hk <= 0 for hk in self.h):
            raise ValueError("spacings must be positive")
        if self.n_t < 1 or self.dt <= 0:
            raise ValueError("need n_t >= 1 and dt > 0")

    @property
    def m(self):
        """Spacetime dimension 1 + d."""
        return 1 + self.d

    @property
    def n_sites(self):
        return int(np.prod(self.sites_per_dim))

    @property
    def weight(self):
        """Volume weight of one lattice cell."""
        return float(np.prod(self.h))

    @property
    def volume(self):
        return self.n_sites * self.weight

    @property
    def epsilon(self):
        """Collar depth."""
        return self.n_t * self.dt

    def grid_shape(self, trailing):
        return self.sites_per_dim + trailing

    def partial_k(self, fld, k):
        """Central difference along spatial axis k with periodic wraparound.

        ``fld`` has the flattened site axis first; trailing axes pass
        through unchanged.
        """
        if not 0 <= k < self.d:
            raise ValueError(f"axis {k} out of range for d={self.d}")
        fld = np.asarray(fld)
        if fld.shape[0] != self.n_sites:
            raise ValueError("field site axis does not match mesh")
        grid = fld.reshape(self.grid_shape(fld.shape[1:]))
        out = (np.roll(grid, -1, axis=k) - np.roll(grid, 1, axis=k)) / (2.0 * self.h[k])
        return out.reshape(fld.shape)

    def gradient(self, fld):
        """Stack of partial_k along a new axis 1: (N, ...) -> (N, d, ...)."""
        return np.stack([self.partial_k(fld, k) for k in range(self.d)], axis=1)

    def integrate(self, f):
        """Lattice integral of a scalar field, fixed lexicographic order."""
        f = np.asarray(f)
        if f.shape[0] != self.n_sites:
            raise ValueError("field site axis does not match mesh")
        return float(np.sum(f)) * self.weight

    def site_coordinates(self):
        """(N, d) array of site positions."""
        axes = [np.arange(s) * hk for s, hk in zip(self.sites_per_dim, self.h)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=-1)

    def extent(self, k):
        """Period of the torus along axis k."""
        return self.sites_per_dim[k] * self.h[k]


def d_a(mesh, spec, a, xi):
    """Gauge-covariant derivative (d_a xi)_k = partial_k xi + [a_k, xi].

    a has shape (N, d, g), xi has shape (N, g); result is (N, d, g).
    """
    a = np.asarray(a)
    xi = np.asarray(xi)
    if a.shape != (mesh.n_sites, mesh.d, spec.dim) or xi.shape != (mesh.n_sites, spec.dim):
        raise ValueError("shape mismatch in d_a")
    grad = mesh.gradient(xi)
    if spec.is_abelian:
        return grad
    return grad + bracket(spec, a, xi[:, None, :])


def d_a_star(mesh, spec, a, p):
    """Adjoint of d_a: the covariant divergence sum_k(partial_k p^k + [a_k, p^k]).

    Defined so that <p, d_a xi> = <-d_a_star(a, p), xi> holds to machine
    precision for every xi (skew-adjointness of the central difference
    plus ad-invariance of the pairing).
    """
    a = np.asarray(a)
    p = np.asarray(p)
    if p.shape != (mesh.n_sites, mesh.d, spec.dim) or a.shape != p.shape:
        raise ValueError("shape mismatch in d_a_star")
    div = sum(mesh.partial_k(p[:, k, :], k) for k in range(mesh.d))
    if spec.is_abelian:
        return div
    return div + np.einsum("abc,xkb,xkc->xa", spec.structure, a, p)


def pairing(mesh, spec, x, y):
    """Canonical pairing: contract algebra indices with the pairing form,
    match any remaining component axes elementwise, then integrate."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise ValueError("mesh pairing requires identical shapes")
    if x.shape[0] != mesh.n_sites or x.shape[-1] != spec.dim:
        raise ValueError("field shapes do not match mesh/algebra")
    density = algebra_pair(spec, x, y)
    while density.ndim > 1:
        density = density.sum(axis=-1)
    return mesh.integrate(density)
