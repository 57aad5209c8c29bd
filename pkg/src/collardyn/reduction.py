"""Gauge group action, moment map, and reduction diagnostics.

The gauge group acts per site; algebra-valued coefficient fields all
transform through the same adjoint matrix (the pairing form is
invariant, so the identified coadjoint action coincides), the
connection picks up the inhomogeneous g^{-1} dg term realized on the
matrix entries, and frame legs rotate in the defining representation on
their internal (lower) index.

The moment map J(a, p) = -d_a_star(a, p) satisfies
<J(a,p), xi> = <p, d_a xi> exactly by the adjoint construction of the
mesh module; everything downstream (Hamiltonian action, coisotropy of
the zero level, isotropy of boundary solution data) is checked at
tangent-space level with dense linear algebra.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .algebra import bracket, minkowski_eta
from .fields import BulkField
from .mesh import d_a, d_a_star


@dataclass(eq=False)
class GaugeElement:
    """Per-site group element g = exp(xi), xi an algebra-valued field."""

    xi: np.ndarray          # (N, g) generator coefficients
    spec: object

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        if self.xi.ndim != 2 or self.xi.shape[1] != self.spec.dim:
            raise ValueError("generator field must be (n_sites, dim)")

    @property
    def is_constant(self):
        return bool(np.all(self.xi == self.xi[0]))

    def adjoint_matrices(self):
        """Ad_{g^{-1}} on coefficient arrays: expm(-ad_xi) per site."""
        if self.spec.is_abelian:
            n, g = self.xi.shape
            return np.tile(np.eye(g), (n, 1, 1))
        ad = np.einsum("abc,xb->xac", self.spec.structure, self.xi)
        return np.stack([scipy.linalg.expm(-m) for m in ad])

    def defining_matrices(self):
        """exp(xi^a T_a) in the defining representation, or None (abelian)."""
        if self.spec.generators is None:
            return None
        gen = np.einsum("xa,aij->xij", self.xi, self.spec.generators)
        return np.stack([scipy.linalg.expm(m) for m in gen])


def algebra_coefficients(spec, mats):
    """Project matrices (..., r, r) onto the generator basis -> (..., dim)."""
    gens = spec.generators
    flat = gens.reshape(spec.dim, -1).T                      # (r*r, dim)
    basis = np.concatenate([flat.real, flat.imag], axis=0)
    pinv = np.linalg.pinv(basis)
    m = np.asarray(mats)
    vec = m.reshape(m.shape[:-2] + (-1,))
    stacked = np.concatenate([vec.real, vec.imag], axis=-1)
    return stacked @ pinv.T


def inhomogeneous_term(mesh, elem):
    """Coefficients of g^{-1} partial_k g, derivatives on matrix entries."""
    spec = elem.spec
    if spec.is_abelian:
        return mesh.gradient(elem.xi)
    mats = elem.defining_matrices()
    inv = np.linalg.inv(mats)
    cols = []
    for k in range(mesh.d):
        dmat = mesh.partial_k(mats, k)
        cols.append(algebra_coefficients(spec, np.einsum("xij,xjk->xik", inv, dmat)))
    return np.stack(cols, axis=1)


def _frame_rotation(spec, mats, m):
    """Defining-rep action on the lower internal index of frame legs."""
    if mats is None or mats.shape[-1] != m:
        return None
    eta = minkowski_eta(m)
    return np.einsum("i,xij,j->xij", eta, mats.real, eta)


def gauge_transform(mesh, spec, elem, state):
    """Apply a gauge transformation to a boundary state.

    a maps to g^{-1} a g + g^{-1} dg; all other algebra-valued fields
    transform through the adjoint matrices; frame legs rotate on their
    internal index when the defining representation matches the frame
    dimension (the Lorentz case), otherwise they are left untouched.
    """
    if elem.xi.shape[0] != state.n_sites:
        raise ValueError("gauge element does not match the state lattice")
    out = state.copy()
    rot = elem.adjoint_matrices()

    def ad(arr):
        return np.einsum("xab,x...b->x...a", rot, arr)

    out.a = ad(state.a) + inhomogeneous_term(mesh, elem)
    out.a0 = ad(state.a0)
    out.p = ad(state.p)
    out.beta = ad(state.beta)
    out.Lambda = ad(state.Lambda)
    out.Lambda0 = ad(state.Lambda0)
    frame = _frame_rotation(spec, elem.defining_matrices(), state.m)
    if frame is not None:
        out.e = np.einsum("xkI,xIJ->xkJ", state.e, frame)
        out.e0 = np.einsum("xI,xIJ->xJ", state.e0, frame)
    return out


def gauge_transform_bulk(mesh, spec, elem, bulk):
    """Spatial (time-constant) gauge transformation of a bulk field."""
    rot = elem.adjoint_matrices()
    A = np.einsum("xab,tx...b->tx...a", rot, bulk.A)
    A[:, :, 1:, :] += inhomogeneous_term(mesh, elem)[None]
    P = np.einsum("xab,tx...b->tx...a", rot, bulk.P)
    return BulkField(A, P)


def gauge_flow(mesh, spec, a, p, xi):
    """Infinitesimal gauge direction (d_a xi, [p, xi]) at (a, p)."""
    da = d_a(mesh, spec, a, xi)
    dp = bracket(spec, p, xi[:, None, :]) if not spec.is_abelian else np.zeros_like(p)
    return da, dp


def moment_map(mesh, spec, a, p):
    """J(a, p) = -d_a_star(a, p); <J, xi> = <p, d_a xi> for every xi."""
    return -d_a_star(mesh, spec, a, p)


def omega_boundary(mesh, spec, v1, v2):
    """Canonical symplectic form on boundary (a, p) tangent pairs."""
    da1, dp1 = v1
    da2, dp2 = v2
    k = spec.pairing
    dens = np.einsum("ab,xka,xkb->x", k, da1, dp2)
    dens -= np.einsum("ab,xka,xkb->x", k, da2, dp1)
    return mesh.integrate(dens)


def hamiltonian_action_check(mesh, spec, a, p, xi, fd_step=1e-5, n_dirs=6, seed=0):
    """Gap between d<J, xi> and the symplectic pairing with the gauge flow.

    Compares a central finite-difference differential of J_xi along
    random tangent directions with omega(xi_flow, direction); returns
    the largest absolute gap.
    """
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    rng = np.random.default_rng(seed)
    flow = gauge_flow(mesh, spec, a, p, xi)

    def j_xi(aa, pp):
        dens = np.einsum("ab,xa,xb->x", spec.pairing,
                         moment_map(mesh, spec, aa, pp), xi)
        return mesh.integrate(dens)

    gap = 0.0
    for _ in range(n_dirs):
        da = rng.standard_normal(a.shape)
        dp = rng.standard_normal(p.shape)
        scale = np.sqrt(np.sum(da**2) + np.sum(dp**2))
        da, dp = da / scale, dp / scale
        lhs = (j_xi(a + fd_step * da, p + fd_step * dp)
               - j_xi(a - fd_step * da, p - fd_step * dp)) / (2 * fd_step)
        rhs = omega_boundary(mesh, spec, flow, (da, dp))
        gap = max(gap, abs(lhs - rhs))
    return gap


# ---------------------------------------------------------------------------
# tangent-space reduction checks
# ---------------------------------------------------------------------------

def _ambiguity_guard(svals, cutoff):
    band = (svals > cutoff) & (svals < 10 * cutoff)
    if np.any(band):
        raise RuntimeError(
            "rank decision ambiguous (singular values within 10x of the "
            "tolerance); use a finer mesh or a looser tolerance")


def _null_space_guarded(mat, tol):
    if mat.shape[0] == 0:
        return np.eye(mat.shape[1])
    _, s, vt = np.linalg.svd(mat, full_matrices=True)
    cutoff = tol * (s.max() if s.size and s.max() > 0 else 1.0)
    _ambiguity_guard(s, cutoff)
    rank = int(np.sum(s >= cutoff))
    return vt[rank:].T


def coisotropy_check(constraint_fn, omega, point, tol=1e-8):
    """Test whether the zero set of constraint_fn is coisotropic at point.

    T is the null space of the constraint Jacobian, T^omega its
    symplectic orthogonal; the check is the principal-angle containment
    T^omega within T.  Returns (flag, report).
    """
    point = np.asarray(point, dtype=float)
    vals = np.atleast_1d(constraint_fn(point))
    if np.max(np.abs(vals)) > 100 * tol:
        raise ValueError("point does not lie on the constraint zero set")
    n = point.size
    h = 1e-6
    jac = np.zeros((vals.size, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        jac[:, i] = (np.atleast_1d(constraint_fn(point + e))
                     - np.atleast_1d(constraint_fn(point - e))) / (2 * h)
    tangent = _null_space_guarded(jac, tol)
    om = np.asarray(omega)
    t_omega = _null_space_guarded(tangent.T @ om, tol)
    if t_omega.shape[1] == 0:
        angles = np.zeros(0)
        contained = True
    else:
        proj = tangent @ (tangent.T @ t_omega)
        angles = np.linalg.norm(t_omega - proj, axis=0)
        contained = bool(np.max(angles) < tol * 100)
    report = {
        "dim_state": n,
        "dim_tangent": tangent.shape[1],
        "dim_symplectic_orthogonal": t_omega.shape[1],
        "max_principal_angle_sin": float(angles.max()) if angles.size else 0.0,
        "coisotropic": contained,
    }
    return contained, report


def project_out_gauge(mesh, spec, a, da):
    """Remove the gauge components d_a xi from a boundary a-variation."""
    n, d, g = da.shape
    cols = []
    for site in range(n):
        for b in range(g):
            xi = np.zeros((n, g))
            xi[site, b] = 1.0
            cols.append(d_a(mesh, spec, a, xi).reshape(-1))
    basis = np.stack(cols, axis=1)
    u, s, _ = np.linalg.svd(basis, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * s.max())) if s.size else 0
    q = u[:, :rank]
    flat = da.reshape(-1)
    return (flat - q @ (q.T @ flat)).reshape(da.shape)


def isotropy_check(mesh, spec, base_a, variations):
    """Largest |omega| over pairs of boundary solution variations after
    projecting the gauge directions out of the a-components."""
    if len(variations) < 2:
        raise ValueError("need at least two tangent samples")
    projected = [(project_out_gauge(mesh, spec, base_a, da), dp)
                 for (da, dp) in variations]
    worst = 0.0
    pairs_checked = 0
    for i in range(len(projected)):
        for j in range(i + 1, len(projected)):
            worst = max(worst, abs(omega_boundary(mesh, spec,
                                                  projected[i], projected[j])))
            pairs_checked += 1
    return worst, {"pairs": pairs_checked, "max_abs_omega": worst}


# ---------------------------------------------------------------------------
# linear collar solutions (abelian sector)
# ---------------------------------------------------------------------------

def solve_collar_abelian(mesh, spec, a0_slices, a_init, p_init, beta_slices,
                         check_tol=1e-9):
    """March the discrete field equations of the abelian topological theory.

    Inputs: a0_slices (n_t, N, g) multiplier history, a_init (N, d, g)
    flat initial connection, p_init (N, d, g) divergence-free initial
    momentum, beta_slices (n_t, N, d, d, g) skew momenta history.
    Returns the BulkField solution; raises if the interior field
    equations fail to hold.
    """
    if not spec.is_abelian:
        raise ValueError("closed-form marching requires an abelian algebra")
    n_t, n, d, g = mesh.n_t, mesh.n_sites, mesh.d, spec.dim
    A = np.zeros((n_t, n, 1 + d, g))
    P = np.zeros((n_t, n, 1 + d, 1 + d, g))
    A[:, :, 0, :] = a0_slices
    A[0, :, 1:, :] = a_init
    for step in range(1, n_t):
        A[step, :, 1:, :] = A[step - 1, :, 1:, :] + mesh.dt * mesh.gradient(a0_slices[step])
    p = p_init.copy()
    for step in range(1, n_t):
        if step > 1:
            div_beta = np.stack(
                [sum(mesh.partial_k(beta_slices[step - 1][:, k, j, :], j)
                     for j in range(d)) for k in range(d)], axis=1)
            p = p - mesh.dt * div_beta
        P[step, :, 1:, 0, :] = p
        P[step, :, 0, 1:, :] = -p
        P[step, :, 1:, 1:, :] = beta_slices[step]
    from .dynamics import action_gradient

    gA, gP = action_gradient(mesh, spec, BulkField(A, P), 0.0)
    gP_skew = 0.5 * (gP - np.swapaxes(gP, 2, 3))
    interior = max(
        float(np.max(np.abs(gA[1:-1]))) if n_t > 2 else 0.0,
        float(np.max(np.abs(gP_skew[1:]))),
        float(np.max(np.abs(gA[-1, :, 0, :]))),
    )
    if interior > check_tol:
        raise RuntimeError(f"collar solve failed: interior residual {interior:.3e}")
    return BulkField(A, P)


def gauge_fix_temporal(mesh, spec, state):
    """Return a gauge-equivalent state with a0 = 0.

    Realizes the flow g_dot = -a0 g across the collar depth as a single
    rotation by exp(-epsilon a0) at the boundary slice; the transformed
    a0 vanishes identically for time-constant a0.
    """
    elem = GaugeElement(xi=-mesh.epsilon * state.a0, spec=spec)
    out = gauge_transform(mesh, spec, elem, state)
    out.a0 = np.zeros_like(state.a0)
    return out
