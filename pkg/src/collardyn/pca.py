"""Presymplectic constraint analysis and constraint projection.

Generic finite-dimensional machinery (kernel extraction, the recursive
constraint algorithm) plus the concrete boundary constraint set of the
vierbein-constrained theory: residual evaluation, Gauss-Newton
projection, and the Lagrange-multiplier criticality checker.

Submanifolds are operationalized as zero sets with numerical rank
decisions at a relative tolerance; kernel bases are frozen at the
current sample point when turned into constraint functions (exact for
systems whose degenerate directions are constant coordinate planes,
which covers every system treated here).
"""

from dataclasses import dataclass

import numpy as np

from .algebra import pair_list
from .fields import (
    pack_state,
    skew_project,
    state_layout,
    unpack_state,
)
from .dynamics import (
    RESIDUAL_NAMES,
    _torsion_gradients,
    boundary_hamiltonian,
    boundary_hamiltonian_gradient,
    curvature,
    extended_action,
    palatini_boundary_blocks,
)
from .mesh import d_a_star

RANK_TOL = 1e-8


@dataclass(eq=False)
class PresymplecticSystem:
    """Finite-dimensional triple (state space, form, Hamiltonian).

    omega(x) returns an n x n skew matrix, hamiltonian(x) a scalar,
    gradient(x) the n-vector of partial derivatives.
    """

    n: int
    omega: callable
    hamiltonian: callable
    gradient: callable


@dataclass(eq=False)
class PCAResult:
    """Outcome of the recursive constraint algorithm."""

    levels: list               # (dimension estimate, constraint count, point)
    stabilized: bool
    final_kernel_dim: int


# ---------------------------------------------------------------------------
# numerical helpers
# ---------------------------------------------------------------------------

def fd_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_jacobian(funcs, x, h=1e-6):
    rows = [fd_gradient(f, x, h) for f in funcs]
    return np.array(rows) if rows else np.zeros((0, x.size))


def kernel(omega, tol=RANK_TOL):
    """Orthonormal basis of the null space of a skew matrix."""
    omega = np.asarray(omega)
    if omega.size == 0:
        return np.zeros((0, 0))
    if np.max(np.abs(omega + omega.T)) > 1e-10 * max(1.0, np.max(np.abs(omega))):
        raise ValueError("omega is not skew")
    _, s, vt = np.linalg.svd(omega)
    cutoff = tol * (s.max() if s.size and s.max() > 0 else 1.0)
    null_mask = s < cutoff
    basis = vt[null_mask].T
    return basis


def _null_space(mat, tol=RANK_TOL):
    if mat.shape[0] == 0:
        return np.eye(mat.shape[1])
    _, s, vt = np.linalg.svd(mat, full_matrices=True)
    cutoff = tol * (s.max() if s.size and s.max() > 0 else 1.0)
    rank = int(np.sum(s >= cutoff))
    return vt[rank:].T


def gauss_newton(residual_fn, x0, tol=1e-10, max_iter=30, damping=0.5,
                 h=1e-6, rcond=1e-10, what="constraint projection"):
    """Damped Gauss-Newton with minimum-norm steps.

    Solves residual_fn(x) = 0 in the least-squares sense; ties in
    underdetermined steps are broken by the minimum-norm update.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = residual_fn(x)
    for _ in range(max_iter):
        rnorm = np.linalg.norm(r)
        if rnorm <= tol:
            return x
        jac = np.zeros((r.size, x.size))
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = h
            jac[:, i] = (residual_fn(x + e) - residual_fn(x - e)) / (2 * h)
        step, *_ = np.linalg.lstsq(jac, -r, rcond=rcond)
        alpha = 1.0
        while alpha > 1e-8:
            x_new = x + alpha * step
            r_new = residual_fn(x_new)
            if np.linalg.norm(r_new) <= rnorm:
                break
            alpha *= damping
        else:
            raise RuntimeError(f"{what}: step size underflow")
        x, r = x_new, r_new
    if np.linalg.norm(r) <= tol:
        return x
    raise RuntimeError(f"{what}: no convergence in {max_iter} iterations "
                       f"(residual {np.linalg.norm(r):.3e})")


# ---------------------------------------------------------------------------
# the recursive constraint algorithm
# ---------------------------------------------------------------------------

def pca_step(system, point, current_constraints, tol=RANK_TOL, check_tol=1e-6):
    """One level of the constraint algorithm.

    Computes the kernel of the presymplectic form pulled back to the
    current constraint tangent space and returns one candidate
    constraint function per kernel direction (direction frozen at the
    sample point).
    """
    point = np.asarray(point, dtype=float)
    if current_constraints:
        vals = np.array([c(point) for c in current_constraints])
        if np.max(np.abs(vals)) > check_tol:
            raise ValueError("sample point violates the current constraints")
    jac = fd_jacobian(current_constraints, point)
    tangent = _null_space(jac, tol)
    if tangent.shape[1] == 0:
        return []
    om = np.asarray(system.omega(point))
    om_t = tangent.T @ om @ tangent
    zbasis = kernel(om_t, tol)
    directions = tangent @ zbasis

    def make(z):
        def c(y):
            return float(z @ system.gradient(np.asarray(y, dtype=float)))
        c.direction = z
        return c

    return [make(directions[:, i].copy()) for i in range(directions.shape[1])]


def _rank_of(rows, tol=RANK_TOL):
    if not len(rows):
        return 0
    s = np.linalg.svd(np.array(rows), compute_uv=False)
    cutoff = tol * (s.max() if s.size and s.max() > 0 else 1.0)
    return int(np.sum(s >= cutoff))


def pca_run(system, seed_point, max_levels=10, tol=RANK_TOL, value_tol=1e-8):
    """Iterate the constraint algorithm until stabilization.

    Each level gathers the kernel-direction consistency functions,
    keeps the subset whose gradients cut the current zero set, projects
    the sample point back onto the enlarged set with Gauss-Newton, and
    stops when no independent constraint appears.
    """
    point = np.asarray(seed_point, dtype=float).copy()
    if not np.all(np.isfinite(point)):
        raise ValueError("seed point must be finite")
    constraints = []
    levels = []
    stabilized = False
    final_kernel_dim = 0

    def project(pt, level):
        if not constraints:
            return pt
        fn = lambda x: np.array([c(x) for c in constraints])
        try:
            return gauss_newton(fn, pt, tol=1e-11, max_iter=60,
                                what=f"level {level} projection")
        except RuntimeError as err:
            raise RuntimeError(f"PCA level {level}: {err}") from None

    for level in range(1, max_levels + 1):
        point = project(point, level)
        candidates = pca_step(system, point, constraints, tol)
        final_kernel_dim = len(candidates)
        existing_rows = [fd_gradient(c, point) for c in constraints]
        kept = []
        for cand in candidates:
            row = fd_gradient(cand, point)
            if _rank_of(existing_rows + [row], tol) > _rank_of(existing_rows, tol):
                kept.append(cand)
                existing_rows.append(row)
        if kept:
            constraints.extend(kept)
            point = project(point, level)
            # degenerate chains: a dropped candidate may stay violated
            for cand in candidates:
                if cand not in kept and abs(cand(point)) > 10 * value_tol:
                    constraints.append(cand)
                    point = project(point, level)
        residual = np.array([c(point) for c in constraints]) if constraints else np.zeros(0)
        if not kept and (residual.size == 0 or np.max(np.abs(residual)) < value_tol):
            stabilized = True
            break
        rows = [fd_gradient(c, point) for c in constraints]
        dim = system.n - _rank_of(rows, tol)
        levels.append((dim, len(constraints), point.copy()))
    return PCAResult(levels=levels, stabilized=stabilized,
                     final_kernel_dim=final_kernel_dim)


# ---------------------------------------------------------------------------
# boundary constraint set of the vierbein theory
# ---------------------------------------------------------------------------

def palatini_residuals(mesh, spec, state):
    """The six named constraint residual fields of the boundary system.

    The two vierbein-leg residuals are the exact gradients of the
    boundary Hamiltonian in e and e0, so they vanish precisely where
    the discrete Lagrangian is stationary in the frame fields.
    """
    F = curvature(mesh, spec, state.a)
    pm_p, pm_beta = palatini_boundary_blocks(state)
    grad_e, grad_e0 = _torsion_gradients(mesh, spec, state)
    return {
        "gauss": d_a_star(mesh, spec, state.a, state.p),
        "flatness": F - state.Lambda,
        "beta": state.beta - pm_beta,
        "p": state.p - pm_p,
        "torsion0": grad_e0,
        "torsion1": grad_e,
    }


def residual_norms(mesh, spec, state):
    res = palatini_residuals(mesh, spec, state)
    return {name: float(np.linalg.norm(res[name])) for name in RESIDUAL_NAMES}


def _stack_residuals(res, d):
    pairs = pair_list(d)
    parts = [
        res["gauss"].reshape(-1),
        np.stack([res["flatness"][:, k, j] for (k, j) in pairs], axis=1).reshape(-1)
        if pairs else np.zeros(0),
        np.stack([res["beta"][:, k, j] for (k, j) in pairs], axis=1).reshape(-1)
        if pairs else np.zeros(0),
        res["p"].reshape(-1),
        res["torsion0"].reshape(-1),
        res["torsion1"].reshape(-1),
    ]
    return np.concatenate(parts)


def constraint_residual_vector(mesh, spec, state):
    """All six residual families stacked into one flat vector."""
    return _stack_residuals(palatini_residuals(mesh, spec, state), state.d)


def _eliminate_multipliers(mesh, spec, state):
    """Solve the two explicit graph constraints exactly in place."""
    out = state.copy()
    out.Lambda = curvature(mesh, spec, out.a)
    _, pm_beta = palatini_boundary_blocks(out)
    out.beta = skew_project(pm_beta, 1, 2)
    return out


def project_constraints(mesh, spec, state, tol=1e-10, max_iter=30):
    """Project a boundary state onto the joint constraint zero set.

    The multiplier constraints Lambda = F_a and beta = eps e^e are
    linear graphs and are eliminated exactly; the remaining residuals
    (Gauss law, momentum block, the two vierbein-leg gradients) are
    driven to zero by damped minimum-norm Gauss-Newton over
    (a, p, Lambda0, e, e0).  a0 is untouched: no residual involves it.
    """
    n, d, g, m = state.n_sites, state.d, state.g, state.m

    def reduced_pack(st):
        return np.concatenate([st.a.reshape(-1), st.p.reshape(-1),
                               st.Lambda0.reshape(-1), st.e.reshape(-1),
                               st.e0.reshape(-1)])

    sizes = [n * d * g, n * d * g, n * d * g, n * d * m, n * m]

    def reduced_unpack(vec, template):
        st = template.copy()
        off = 0
        chunks = []
        for s in sizes:
            chunks.append(vec[off:off + s])
            off += s
        st.a = chunks[0].reshape(n, d, g)
        st.p = chunks[1].reshape(n, d, g)
        st.Lambda0 = chunks[2].reshape(n, d, g)
        st.e = chunks[3].reshape(n, d, m)
        st.e0 = chunks[4].reshape(n, m)
        return _eliminate_multipliers(mesh, spec, st)

    def residual_fn(vec):
        st = reduced_unpack(vec, state)
        res = palatini_residuals(mesh, spec, st)
        parts = [res["gauss"].reshape(-1), res["p"].reshape(-1),
                 res["torsion0"].reshape(-1), res["torsion1"].reshape(-1)]
        return np.concatenate(parts)

    start = _eliminate_multipliers(mesh, spec, state)
    vec = reduced_pack(start)
    if np.linalg.norm(residual_fn(vec)) > tol:
        vec = gauss_newton(residual_fn, vec, tol=tol, max_iter=max_iter,
                           what="constraint projection")
    out = reduced_unpack(vec, state)
    out.a0 = state.a0.copy()
    return out


# ---------------------------------------------------------------------------
# Lagrange-multiplier criticality
# ---------------------------------------------------------------------------

def _fd_block(action_fn, arr, entries, h):
    vals = np.zeros(len(entries))
    for i, idx in enumerate(entries):
        old = arr[idx]
        arr[idx] = old + h
        plus = action_fn()
        arr[idx] = old - h
        minus = action_fn()
        arr[idx] = old
        vals[i] = (plus - minus) / (2 * h)
    return vals


def lagrange_criticality_check(mesh, spec, A, P, Lam, e_bulk, tol=1e-8,
                               fd_step=1e-5):
    """Finite-difference gradient blocks of the extended action.

    The A block ranges over interior time slices (variations vanishing
    at both collar edges; the t = 0 edge carries the boundary pairing,
    not an interior stationarity condition).  The multiplier block is
    also compared against its exact closed form, the quadrature-weighted
    constraint residual.
    """
    from .fields import BulkField, palatini_map

    A = A.copy()
    P = P.copy()
    Lam = Lam.copy()
    e = e_bulk.e.copy()
    n_t, n, m, g = A.shape
    pairs = pair_list(m)

    def act():
        from .fields import VierbeinField

        return extended_action(mesh, spec, BulkField(A, P), Lam,
                               VierbeinField(e)).total

    a_entries = [(t, x, mu, b) for t in range(1, n_t - 1) for x in range(n)
                 for mu in range(m) for b in range(g)]
    a_block = _fd_block(act, A, a_entries, fd_step)

    def skew_block(arr):
        vals = []
        for t in range(1, n_t):
            for x in range(n):
                for (mu, nu) in pairs:
                    for b in range(g):
                        old1, old2 = arr[t, x, mu, nu, b], arr[t, x, nu, mu, b]
                        arr[t, x, mu, nu, b] = old1 + fd_step
                        arr[t, x, nu, mu, b] = old2 - fd_step
                        plus = act()
                        arr[t, x, mu, nu, b] = old1 - fd_step
                        arr[t, x, nu, mu, b] = old2 + fd_step
                        minus = act()
                        arr[t, x, mu, nu, b] = old1
                        arr[t, x, nu, mu, b] = old2
                        vals.append((plus - minus) / (2 * fd_step))
        return np.array(vals)

    p_block = skew_block(P)
    lam_block = skew_block(Lam)

    e_entries = [(t, x, mu, i) for t in range(1, n_t) for x in range(n)
                 for mu in range(m) for i in range(m)]
    e_block = _fd_block(act, e, e_entries, fd_step)

    diff = P - palatini_map(e_bulk)
    analytic = mesh.dt * mesh.weight * (diff @ spec.pairing)
    # same ordering as skew_block: slice, site, spacetime pair, algebra
    analytic_lam = np.stack([analytic[1:, :, mu, nu, :] for (mu, nu) in pairs],
                            axis=2).reshape(-1)

    norms = {
        "A": float(np.max(np.abs(a_block))) if a_block.size else 0.0,
        "P": float(np.max(np.abs(p_block))) if p_block.size else 0.0,
        "Lambda": float(np.max(np.abs(lam_block))) if lam_block.size else 0.0,
        "e": float(np.max(np.abs(e_block))) if e_block.size else 0.0,
    }
    gap = float(np.max(np.abs(lam_block - analytic_lam))) if lam_block.size else 0.0
    constraint_norm = float(np.max(np.abs(diff[1:]))) if diff[1:].size else 0.0
    return {
        "blocks": norms,
        "critical": all(v < tol for v in norms.values()),
        "lambda_block_gap": gap,
        "constraint_norm": constraint_norm,
    }


# ---------------------------------------------------------------------------
# the boundary system as a finite-dimensional presymplectic triple
# ---------------------------------------------------------------------------

def boundary_omega_matrix(mesh, spec, d=None):
    """Constant presymplectic matrix on packed boundary states.

    Pairs the a block against the p block through the algebra pairing
    and the lattice weight; every other direction is degenerate.
    """
    n, dd, g, m = mesh.n_sites, mesh.d, spec.dim, mesh.m
    layout = state_layout(n, dd, g, m)
    total = sum(s for _, _, s in layout)
    offsets = {}
    off = 0
    for name, _, size in layout:
        offsets[name] = off
        off += size
    om = np.zeros((total, total))
    block = mesh.weight * spec.pairing
    na = n * dd
    for i in range(na):
        sl_a = slice(offsets["a"] + i * g, offsets["a"] + (i + 1) * g)
        sl_p = slice(offsets["p"] + i * g, offsets["p"] + (i + 1) * g)
        om[sl_a, sl_p] = block
        om[sl_p, sl_a] = -block
    return om


def palatini_boundary_system(mesh, spec):
    """PresymplecticSystem wrapping the packed boundary state space."""
    n, d, g, m = mesh.n_sites, mesh.d, spec.dim, mesh.m
    om = boundary_omega_matrix(mesh, spec)

    def unpack(z):
        return unpack_state(np.asarray(z, dtype=float), n, d, g, m)

    return PresymplecticSystem(
        n=om.shape[0],
        omega=lambda z: om,
        hamiltonian=lambda z: boundary_hamiltonian(mesh, spec, unpack(z)),
        gradient=lambda z: pack_state(
            boundary_hamiltonian_gradient(mesh, spec, unpack(z))),
    )
