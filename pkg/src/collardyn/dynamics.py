"""Actions, Hamiltonians, boundary evolution and variational checks.

Discretization conventions, fixed once and used by every routine here:

* Inner (algebra) indices are always contracted with the pairing form of
  the algebra spec; spacetime indices with eta = diag(-1, +1, ..., +1).
* The collar action uses the first-order divided difference in time
  (momenta and Hamiltonian evaluated on the newer slice), so the
  boundary term of the variation sits exactly on the t = 0 slice.
* Spatial derivatives are central differences on the torus.
* Contractions of two fields carrying a skew spatial index pair carry
  weight 1/2 on the full double sum.

The boundary Hamiltonian is normalized so that the standard Hamilton
equations

    a_dot = +dH/dp ,    p_dot = -dH/da

reproduce the closed-form evolution equations

    a_dot = d_a a0 - 2 Lambda0 ,
    p_dot = d_a_star(beta columns) + [p, a0]

and the six constraint equations arise as its gradients in the
remaining fields.  The variational-consistency tests pin every sign.
"""

from dataclasses import dataclass

import numpy as np

from .algebra import bracket, minkowski_eta, pair_list
from .fields import BoundaryState, BulkField, palatini_map
from .mesh import d_a, d_a_star


@dataclass(eq=False)
class ActionValue:
    """Total action plus the per-slice diagnostic decomposition."""

    total: float
    per_slice: np.ndarray
    dt: float

    def additivity_gap(self):
        return abs(self.total - float(np.sum(self.per_slice)) * self.dt)


@dataclass(eq=False)
class EvolutionRecord:
    """One step of a boundary evolution."""

    t: float
    state: BoundaryState
    hamiltonian: float
    constraint_residuals: dict


RESIDUAL_NAMES = ("gauss", "flatness", "beta", "p", "torsion0", "torsion1")


# ---------------------------------------------------------------------------
# curvature and bulk Hamiltonian
# ---------------------------------------------------------------------------

def curvature(mesh, spec, a):
    """Boundary field strength F_kj = partial_k a_j - partial_j a_k + [a_k, a_j].

    a is (N, d, g); the result is (N, d, d, g), skew in (k, j).
    """
    n, d, g = a.shape
    grad = np.stack([mesh.partial_k(a[:, j, :], k)
                     for k in range(d) for j in range(d)], axis=1)
    grad = grad.reshape(n, d, d, g)
    out = grad - np.swapaxes(grad, 1, 2)
    if not spec.is_abelian:
        out = out + np.einsum("abc,xkb,xjc->xkja", spec.structure, a, a)
    return out


def bulk_hamiltonian(spec, A, P, lam):
    """Per-site Hamiltonian density H_lam of the first-order theory.

    A is (..., m, g), P is (..., m, m, g) skew; returns (...,).
    The cubic term is (1/2) sum_{mu,nu} <P^{mu nu}, [A_mu, A_nu]>, the
    quadratic term (lam/4) sum eta_mu eta_nu <P^{mu nu}, P^{mu nu}>.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    A = np.asarray(A)
    P = np.asarray(P)
    m = A.shape[-2]
    k = spec.pairing
    out = np.zeros(A.shape[:-2])
    if not spec.is_abelian:
        comm = np.einsum("abc,...mb,...nc->...mna", spec.structure, A, A)
        out = out + 0.5 * np.einsum("ab,...mna,...mnb->...", k, P, comm)
    if lam > 0:
        eta = minkowski_eta(m)
        out = out + 0.25 * lam * np.einsum(
            "m,n,ab,...mna,...mnb->...", eta, eta, k, P, P)
    return out


def _bulk_hamiltonian_grads(spec, A, P, lam):
    """Pairing-metric gradients of H_lam: (dH/dA, dH/dP)."""
    m = A.shape[-2]
    gA = np.zeros_like(A)
    gP = np.zeros_like(P)
    if not spec.is_abelian:
        gA = np.einsum("abc,...nb,...mnc->...ma", spec.structure, A, P)
        gP = 0.5 * np.einsum("abc,...mb,...nc->...mna", spec.structure, A, A)
    if lam > 0:
        eta = minkowski_eta(m)
        gP = gP + 0.5 * lam * np.einsum("m,n,...mna->...mna", eta, eta, P)
    return gA, gP


# ---------------------------------------------------------------------------
# collar action and its exact gradient
# ---------------------------------------------------------------------------

def action_ym(mesh, spec, bulk, lam):
    """Discretized first-order Yang-Mills action over the collar.

    At lam = 0 this is the topological action.
    """
    A, P = bulk.A, bulk.P
    if A.shape[0] != mesh.n_t or A.shape[1] != mesh.n_sites or A.shape[2] != mesh.m:
        raise ValueError("bulk field does not match mesh")
    k = spec.pairing
    w = mesh.weight
    per_slice = np.zeros(mesh.n_t)
    dA_t = (A[1:] - A[:-1]) / mesh.dt                       # (n_t-1, N, m, g)
    kin_t = np.einsum("ab,txma,txmb->t", k, P[1:, :, :, 0, :], dA_t)
    spatial = np.zeros(mesh.n_t - 1)
    for kk in range(mesh.d):
        dkA = np.stack([mesh.partial_k(A[n], kk) for n in range(1, mesh.n_t)])
        spatial = spatial + np.einsum("ab,txma,txmb->t", k,
                                      P[1:, :, :, 1 + kk, :], dkA)
    ham = bulk_hamiltonian(spec, A[1:], P[1:], lam).sum(axis=1)
    per_slice[1:] = w * (kin_t + spatial - ham)
    total = float(np.sum(per_slice)) * mesh.dt
    return ActionValue(total=total, per_slice=per_slice, dt=mesh.dt)


def action_gradient(mesh, spec, bulk, lam):
    """Exact gradient of the discrete action w.r.t. the raw (A, P) arrays.

    Returns (gA, gP) with dS(U) = sum(gA * UA) + sum(gP * UP) elementwise.
    """
    A, P = bulk.A, bulk.P
    n_t, n, m, g = A.shape
    k = spec.pairing
    w, dt = mesh.weight, mesh.dt
    gA = np.zeros_like(A)
    gP = np.zeros_like(P)

    # kinetic (time-difference) terms
    KP0 = np.einsum("ab,txmb->txma", k, P[:, :, :, 0, :])   # K-contracted P^{mu 0}
    gA[1:] += w * KP0[1:]
    gA[:-1] -= w * KP0[1:]
    dA_t = A[1:] - A[:-1]
    gP[1:, :, :, 0, :] += w * np.einsum("ab,txmb->txma", k, dA_t)

    # spatial-derivative terms (central difference adjoint = negation)
    for kk in range(mesh.d):
        KPk = np.einsum("ab,txmb->txma", k, P[1:, :, :, 1 + kk, :])
        adj = np.stack([mesh.partial_k(KPk[i], kk) for i in range(n_t - 1)])
        gA[1:] -= dt * w * adj
        dkA = np.stack([mesh.partial_k(A[i], kk) for i in range(1, n_t)])
        gP[1:, :, :, 1 + kk, :] += dt * w * np.einsum("ab,txmb->txma", k, dkA)

    # Hamiltonian terms
    hA, hP = _bulk_hamiltonian_grads(spec, A[1:], P[1:], lam)
    gA[1:] -= dt * w * np.einsum("ab,txmb->txma", k, hA)
    gP[1:] -= dt * w * np.einsum("ab,txmnb->txmna", k, hP)
    return gA, gP


def boundary_alpha(mesh, spec, bulk, U):
    """Canonical boundary pairing <p, delta phi> at the t = 0 slice."""
    UA, _ = U
    return mesh.weight * float(
        np.einsum("ab,xma,xmb->", spec.pairing, bulk.P[-1, :, :, 0, :], UA[-1]))


def el_oneform(mesh, spec, bulk, U, lam=0.0):
    """Euler-Lagrange 1-form evaluated on the variation U = (UA, UP).

    This is the exact differential of the discrete action minus the
    canonical boundary term; it vanishes on interior variations along
    discrete solutions.
    """
    UA, UP = U
    gA, gP = action_gradient(mesh, spec, bulk, lam)
    dS = float(np.sum(gA * UA) + np.sum(gP * UP))
    return dS - boundary_alpha(mesh, spec, bulk, U)


def fundamental_check(mesh, spec, bulk, U, lam=0.0, fd_step=1e-5):
    """Check dS(U) = EL(U) + boundary pairing against finite differences.

    Returns (lhs, rhs, gap): lhs is the central finite-difference
    directional derivative of the action on the unit-normalized U, rhs
    the closed-form EL term plus the boundary pairing.
    """
    UA = np.asarray(U[0], dtype=float)
    UP = np.asarray(U[1], dtype=float)
    scale = np.sqrt(np.sum(UA**2) + np.sum(UP**2))
    if scale == 0:
        return 0.0, 0.0, 0.0
    UA, UP = UA / scale, UP / scale
    h = fd_step
    plus = BulkField(bulk.A + h * UA, bulk.P + h * UP)
    minus = BulkField(bulk.A - h * UA, bulk.P - h * UP)
    lhs = (action_ym(mesh, spec, plus, lam).total
           - action_ym(mesh, spec, minus, lam).total) / (2 * h)
    rhs = el_oneform(mesh, spec, bulk, (UA, UP), lam) \
        + boundary_alpha(mesh, spec, bulk, (UA, UP))
    return lhs, rhs, abs(lhs - rhs)


# ---------------------------------------------------------------------------
# Palatini and extended actions
# ---------------------------------------------------------------------------

def multiplier_pairing(mesh, spec, Lam, X):
    """Collar pairing of a bulk multiplier with a bivector field.

    (1/2) full double sum over the skew spacetime pair, slice weights as
    in the action.
    """
    k = spec.pairing
    vals = 0.5 * np.einsum("ab,txmna,txmnb->t", k, Lam[1:], X[1:])
    per_slice = np.zeros(mesh.n_t)
    per_slice[1:] = mesh.weight * vals
    return per_slice


def palatini_action(mesh, spec, A, e_bulk):
    """Topological action restricted to the vierbein constraint surface."""
    P = palatini_map(e_bulk)
    return action_ym(mesh, spec, BulkField(A, P), 0.0)


def extended_action(mesh, spec, bulk, Lam, e_bulk):
    """Topological action plus <Lambda, P - P(e)> over the collar."""
    base = action_ym(mesh, spec, bulk, 0.0)
    Pm = palatini_map(e_bulk)
    mult = multiplier_pairing(mesh, spec, Lam, bulk.P - Pm)
    per_slice = base.per_slice + mult
    total = float(np.sum(per_slice)) * mesh.dt
    return ActionValue(total=total, per_slice=per_slice, dt=mesh.dt)


# ---------------------------------------------------------------------------
# boundary Hamiltonian system
# ---------------------------------------------------------------------------

def _require_pair_algebra(spec, m):
    if spec.dim != len(pair_list(m)):
        raise ValueError(
            f"boundary Palatini fields need an algebra of dimension "
            f"{len(pair_list(m))} for m={m}, got {spec.dim}")


def palatini_boundary_blocks(state):
    """(eps e^e) blocks of the assembled frame: p-block (N,d,G) and
    beta-block (N,d,d,G)."""
    Pm = palatini_map(state.vierbein())
    return Pm[:, 1:, 0, :], Pm[:, 1:, 1:, :]


def boundary_hamiltonian(mesh, spec, state):
    """Extended boundary Hamiltonian of the constrained boundary system.

    Normalized so that a_dot = +dH/dp and p_dot = -dH/da reproduce the
    closed-form evolution equations; its gradients in (a0, beta, Lambda,
    Lambda0, e, e0) are the six constraints.
    """
    _require_pair_algebra(spec, state.m)
    k = spec.pairing
    da0 = d_a(mesh, spec, state.a, state.a0)
    F = curvature(mesh, spec, state.a)
    pm_p, pm_beta = palatini_boundary_blocks(state)
    dens = np.einsum("ab,xka,xkb->x", k, state.p, da0 - 2.0 * state.Lambda0)
    dens += 0.5 * np.einsum("ab,xkja,xkjb->x", k, state.beta, F - state.Lambda)
    dens += 2.0 * np.einsum("ab,xka,xkb->x", k, state.Lambda0, pm_p)
    dens += 0.5 * np.einsum("ab,xkja,xkjb->x", k, state.Lambda, pm_beta)
    return mesh.integrate(dens)


def ym_boundary_hamiltonian(mesh, spec, state, lam):
    """Boundary Hamiltonian of the lambda-family Yang-Mills system."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    k = spec.pairing
    da0 = d_a(mesh, spec, state.a, state.a0)
    F = curvature(mesh, spec, state.a)
    dens = np.einsum("ab,xka,xkb->x", k, state.p, da0)
    dens += 0.5 * np.einsum("ab,xkja,xkjb->x", k, state.beta, F)
    dens -= 0.5 * lam * np.einsum("ab,xka,xkb->x", k, state.p, state.p)
    dens += 0.25 * lam * np.einsum("ab,xkja,xkjb->x", k, state.beta, state.beta)
    return mesh.integrate(dens)


def evolution_rhs(mesh, spec, state, lam=None):
    """Closed-form right-hand sides (a_dot, p_dot).

    lam=None gives the multiplier system (a_dot = d_a a0 - 2 Lambda0);
    a numeric lam gives the Yang-Mills lambda flow (a_dot = d_a a0 -
    lam p).  In both cases p_dot = d_a_star(beta columns) + [p, a0].
    """
    da0 = d_a(mesh, spec, state.a, state.a0)
    if lam is None:
        adot = da0 - 2.0 * state.Lambda0
    else:
        adot = da0 - lam * state.p
    cols = [d_a_star(mesh, spec, state.a, state.beta[:, :, j, :])
            for j in range(state.d)]
    pdot = np.stack(cols, axis=1)
    if not spec.is_abelian:
        pdot = pdot + bracket(spec, state.p, state.a0[:, None, :])
    return adot, pdot


def _torsion_gradients(mesh, spec, state):
    """Exact gradients of the boundary Hamiltonian in the vierbein legs.

    These are the discrete realizations of the two multiplier-vierbein
    constraint equations; zero where the e-variations of the boundary
    Lagrangian vanish.
    """
    from .fields import pairs_to_matrix

    k = spec.pairing
    E = state.vierbein().e                       # (N, m, m)
    det = np.linalg.det(E)
    inv = np.linalg.inv(E)                       # inv[x, I, mu]
    L0 = pairs_to_matrix(state.Lambda0 @ k, state.m)   # (N, d, m, m)
    L = pairs_to_matrix(state.Lambda @ k, state.m)     # (N, d, d, m, m)
    e_rows = E[:, 1:, :]                         # (N, d, m)
    e0_row = E[:, 0, :]                          # (N, m)
    q = np.einsum("xkIJ,xkI,xJ->x", L0, e_rows, e0_row)
    q += 0.25 * np.einsum("xkjIJ,xkI,xjJ->x", L, e_rows, e_rows)
    w = mesh.weight
    grad_e = w * det[:, None, None] * (
        np.einsum("xIl,x->xlI", inv[:, :, 1:], q)
        + np.einsum("xlIJ,xJ->xlI", L0, e0_row)
        + 0.5 * np.einsum("xljIJ,xjJ->xlI", L, e_rows)
    )
    grad_e0 = w * det[:, None] * (
        np.einsum("xI,x->xI", inv[:, :, 0], q)
        - np.einsum("xkIJ,xkJ->xI", L0, e_rows)
    )
    return grad_e, grad_e0


def boundary_hamiltonian_gradient(mesh, spec, state):
    """Exact gradient of the boundary Hamiltonian in every field.

    Returned as a BoundaryState-shaped container of raw-array gradients;
    the skew blocks hold the packed degree-of-freedom gradient at k < j.
    """
    _require_pair_algebra(spec, state.m)
    k = spec.pairing
    w = mesh.weight
    adot, pdot = evolution_rhs(mesh, spec, state)
    F = curvature(mesh, spec, state.a)
    pm_p, pm_beta = palatini_boundary_blocks(state)
    grad_e, grad_e0 = _torsion_gradients(mesh, spec, state)
    return BoundaryState(
        a=-w * (pdot @ k),
        a0=-w * (d_a_star(mesh, spec, state.a, state.p) @ k),
        p=w * (adot @ k),
        beta=w * ((F - state.Lambda) @ k),
        Lambda=w * ((pm_beta - state.beta) @ k),
        Lambda0=2.0 * w * ((pm_p - state.p) @ k),
        e=grad_e,
        e0=grad_e0,
    )


# ---------------------------------------------------------------------------
# time integration
# ---------------------------------------------------------------------------

def _with_ap(state, a, p):
    out = state.copy()
    out.a = a
    out.p = p
    return out


def _residual_norms(mesh, spec, state, lam):
    if lam is None:
        from .pca import palatini_residuals

        res = palatini_residuals(mesh, spec, state)
        return {name: float(np.linalg.norm(res[name])) for name in RESIDUAL_NAMES}
    norms = dict.fromkeys(RESIDUAL_NAMES, 0.0)
    norms["gauss"] = float(np.linalg.norm(d_a_star(mesh, spec, state.a, state.p)))
    norms["flatness"] = float(np.linalg.norm(curvature(mesh, spec, state.a)))
    return norms


def evolve(mesh, spec, state0, n_steps, dt, lam=None, projection=False,
           project_tol=1e-10, project_max_iter=40):
    """Explicit RK4 stepping of (a, p); multipliers held fixed per step.

    With projection enabled, each step is followed by a Gauss-Newton
    projection onto the constraint set before recording.  Raises on
    divergence (field norm above 1e6), reporting the step index.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    state = state0.copy()

    def rhs(a, p):
        return evolution_rhs(mesh, spec, _with_ap(state, a, p), lam=lam)

    def make_record(t, st):
        if lam is None:
            ham = boundary_hamiltonian(mesh, spec, st)
        else:
            ham = ym_boundary_hamiltonian(mesh, spec, st, lam)
        return EvolutionRecord(t=t, state=st.copy(), hamiltonian=ham,
                               constraint_residuals=_residual_norms(mesh, spec, st, lam))

    records = [make_record(0.0, state)]
    for step in range(n_steps):
        a, p = state.a, state.p
        k1a, k1p = rhs(a, p)
        k2a, k2p = rhs(a + 0.5 * dt * k1a, p + 0.5 * dt * k1p)
        k3a, k3p = rhs(a + 0.5 * dt * k2a, p + 0.5 * dt * k2p)
        k4a, k4p = rhs(a + dt * k3a, p + dt * k3p)
        state.a = a + (dt / 6.0) * (k1a + 2 * k2a + 2 * k3a + k4a)
        state.p = p + (dt / 6.0) * (k1p + 2 * k2p + 2 * k3p + k4p)
        if projection:
            from .pca import project_constraints

            state = project_constraints(mesh, spec, state, tol=project_tol,
                                        max_iter=project_max_iter)
        if max(np.max(np.abs(state.a)), np.max(np.abs(state.p))) > 1e6:
            raise RuntimeError(f"evolution diverged at step {step}")
        records.append(make_record((step + 1) * dt, state))
    return records


# ---------------------------------------------------------------------------
# topological-limit diagnostics
# ---------------------------------------------------------------------------

def bulk_curvature_norm(mesh, spec, A):
    """L2 norm of the full collar field strength (time pairs by divided
    differences on slices >= 1, spatial pairs central)."""
    total = 0.0
    for n in range(1, mesh.n_t):
        a_sp = A[n, :, 1:, :]
        F_sp = curvature(mesh, spec, a_sp)
        dA_t = (A[n, :, 1:, :] - A[n - 1, :, 1:, :]) / mesh.dt
        grad_a0 = mesh.gradient(A[n, :, 0, :])
        F_t = dA_t - grad_a0
        if not spec.is_abelian:
            F_t = F_t + bracket(spec, A[n, :, None, 0, :], a_sp)
        total += np.sum(F_sp**2) + 2.0 * np.sum(F_t**2)
    return float(np.sqrt(total))


def bulk_gauss_norm(mesh, spec, A, P):
    """L2 norm of the covariant divergence of P over interior slices."""
    total = 0.0
    for n in range(1, mesh.n_t):
        div = (P[n, :, :, 0, :] - P[n - 1, :, :, 0, :]) / mesh.dt
        for kk in range(mesh.d):
            div = div + mesh.partial_k(P[n, :, :, 1 + kk, :], kk)
        if not spec.is_abelian:
            div = div + np.einsum("abc,xnb,xmnc->xma",
                                  spec.structure, A[n], P[n])
        total += np.sum(div**2)
    return float(np.sqrt(total))


def _flat_divergence_projection(mesh, spec, P0):
    """Remove the spatial flat-divergence part of a time-constant momentum
    slice, working in packed skew coordinates (minimum-norm correction)."""
    n, m, g = P0.shape[0], P0.shape[1], P0.shape[3]
    pairs = pair_list(m)

    def unpack(vec):
        out = np.zeros((n, m, m, g))
        arr = vec.reshape(n, len(pairs), g)
        for idx, (i, j) in enumerate(pairs):
            out[:, i, j, :] = arr[:, idx]
            out[:, j, i, :] = -arr[:, idx]
        return out

    def divergence(P):
        return sum(mesh.partial_k(P[:, :, 1 + kk, :], kk) for kk in range(mesh.d))

    size = n * len(pairs) * g
    cols = []
    for i in range(size):
        unit = np.zeros(size)
        unit[i] = 1.0
        cols.append(divergence(unpack(unit)).reshape(-1))
    L = np.stack(cols, axis=1)
    vec = np.array([P0[:, i, j, :] for (i, j) in pairs]).transpose(1, 0, 2).reshape(-1)
    corr, *_ = np.linalg.lstsq(L, L @ vec, rcond=None)
    return unpack(vec - corr)


def lambda_sweep(mesh, spec, seed, lambdas, amplitude=0.3):
    """Residual diagnostics of the lambda flow of approximate solutions.

    A fixed random connection profile is scaled by lambda against a
    fixed time-constant, flat-divergence-free momentum field; the
    curvature and covariant-divergence residuals of these states vanish
    linearly in the topological limit.
    """
    from .fields import random_bulk_field, skew_project

    rng = np.random.default_rng(seed)
    base = random_bulk_field(seed, mesh, spec, amplitude)
    P0 = skew_project(amplitude * rng.standard_normal(
        (mesh.n_sites, mesh.m, mesh.m, spec.dim)), 1, 2)
    P0 = _flat_divergence_projection(mesh, spec, P0)
    P = np.broadcast_to(P0, (mesh.n_t,) + P0.shape).copy()
    rows = []
    for lam in lambdas:
        A = lam * base.A
        rows.append((float(lam),
                     bulk_curvature_norm(mesh, spec, A),
                     bulk_gauss_norm(mesh, spec, A, P)))
    lams = np.array([r[0] for r in rows])
    fnorm = np.array([r[1] for r in rows])
    gnorm = np.array([r[2] for r in rows])
    fit = lambda y: float(np.polyfit(np.log(lams), np.log(y), 1)[0])
    return {
        "lambdas": lams,
        "curvature_norms": fnorm,
        "gauss_norms": gnorm,
        "curvature_slope": fit(fnorm),
        "gauss_slope": fit(gnorm),
    }
