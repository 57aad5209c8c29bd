"""Field containers: bulk sections, boundary tuples, vierbeins.

Array layout convention (documented for the snapshot files as well):
site-major first, then component indices (time slice leads for bulk
fields), then the algebra index last.

* BulkField.A : (n_t, N, m, g)      connection components A_mu
* BulkField.P : (n_t, N, m, m, g)   momenta, skew in the two m axes
* BoundaryState fields: a (N,d,g), a0 (N,g), p (N,d,g),
  beta/Lambda (N,d,d,g) skew in (k,j), Lambda0 (N,d,g),
  e (N,d,m) spatial vierbein legs, e0 (N,m) temporal leg
* VierbeinField.e : (..., m, m) with rows = spacetime index, columns =
  internal index
"""

from dataclasses import dataclass, fields as dc_fields

import numpy as np

from .algebra import pair_list


def skew_project(arr, axis1, axis2):
    """Antisymmetrize an array in two axes."""
    return 0.5 * (arr - np.swapaxes(arr, axis1, axis2))


def pairs_to_matrix(coeffs, m):
    """Expand internal pair coefficients (..., G) into antisymmetric
    (..., m, m) matrices, G = m(m-1)/2 with pairs ordered I < J."""
    coeffs = np.asarray(coeffs)
    pairs = pair_list(m)
    if coeffs.shape[-1] != len(pairs):
        raise ValueError("pair coefficient count does not match m")
    out = np.zeros(coeffs.shape[:-1] + (m, m))
    for idx, (i, j) in enumerate(pairs):
        out[..., i, j] = coeffs[..., idx]
        out[..., j, i] = -coeffs[..., idx]
    return out


def matrix_to_pairs(mat):
    """Inverse of :func:`pairs_to_matrix` (reads the I < J entries)."""
    mat = np.asarray(mat)
    m = mat.shape[-1]
    pairs = pair_list(m)
    return np.stack([mat[..., i, j] for (i, j) in pairs], axis=-1)


def max_skew_violation(arr, axis1, axis2):
    return float(np.max(np.abs(arr + np.swapaxes(arr, axis1, axis2)))) if arr.size else 0.0


@dataclass(eq=False)
class BulkField:
    """Lattice section (A, P) over the collar."""

    A: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.P = np.asarray(self.P, dtype=float)
        if self.A.ndim != 4 or self.P.ndim != 5:
            raise ValueError("BulkField expects A (n_t,N,m,g) and P (n_t,N,m,m,g)")
        n_t, n_sites, m, g = self.A.shape
        if self.P.shape != (n_t, n_sites, m, m, g):
            raise ValueError("A and P shapes are inconsistent")
        if max_skew_violation(self.P, 2, 3) > 1e-12:
            raise ValueError("P must be skew in its spacetime index pair")

    @property
    def n_t(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.A.shape[2]

    def copy(self):
        return BulkField(self.A.copy(), self.P.copy())


@dataclass(eq=False)
class VierbeinField:
    """Per-site invertible frame matrices e^mu_I."""

    e: np.ndarray

    def __post_init__(self):
        self.e = np.asarray(self.e, dtype=float)
        if self.e.ndim < 2 or self.e.shape[-1] != self.e.shape[-2]:
            raise ValueError("VierbeinField expects (..., m, m) matrices")

    @property
    def m(self):
        return self.e.shape[-1]

    def copy(self):
        return VierbeinField(self.e.copy())


@dataclass(eq=False)
class BoundaryState:
    """Boundary tuple (a, a0, p, beta, Lambda, Lambda0, e, e0)."""

    a: np.ndarray
    a0: np.ndarray
    p: np.ndarray
    beta: np.ndarray
    Lambda: np.ndarray
    Lambda0: np.ndarray
    e: np.ndarray
    e0: np.ndarray

    def __post_init__(self):
        for f in dc_fields(self):
            setattr(self, f.name, np.asarray(getattr(self, f.name), dtype=float))
        n, d, g = self.a.shape
        m = self.e0.shape[-1]
        expect = {
            "a": (n, d, g),
            "a0": (n, g),
            "p": (n, d, g),
            "beta": (n, d, d, g),
            "Lambda": (n, d, d, g),
            "Lambda0": (n, d, g),
            "e": (n, d, m),
            "e0": (n, m),
        }
        for name, shape in expect.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"BoundaryState field {name} has shape "
                                 f"{getattr(self, name).shape}, expected {shape}")
        for name in ("beta", "Lambda"):
            if max_skew_violation(getattr(self, name), 1, 2) > 1e-12:
                raise ValueError(f"{name} must be skew in its spatial index pair")

    @property
    def n_sites(self):
        return self.a.shape[0]

    @property
    def d(self):
        return self.a.shape[1]

    @property
    def g(self):
        return self.a.shape[2]

    @property
    def m(self):
        return self.e0.shape[-1]

    def copy(self):
        return BoundaryState(*(getattr(self, f.name).copy() for f in dc_fields(self)))

    def vierbein(self):
        """Assemble the full frame matrix per site: row 0 = e0, row 1+k = e_k."""
        n, d, m = self.e.shape
        full = np.empty((n, m, m))
        full[:, 0, :] = self.e0
        full[:, 1:, :] = self.e
        return VierbeinField(full)

    @staticmethod
    def zero(mesh, spec, m=None):
        n, d, g = mesh.n_sites, mesh.d, spec.dim
        m = mesh.m if m is None else m
        return BoundaryState(
            a=np.zeros((n, d, g)),
            a0=np.zeros((n, g)),
            p=np.zeros((n, d, g)),
            beta=np.zeros((n, d, d, g)),
            Lambda=np.zeros((n, d, d, g)),
            Lambda0=np.zeros((n, d, g)),
            e=np.eye(m)[1:, :][None, :, :].repeat(n, axis=0),
            e0=np.tile(np.eye(m)[0], (n, 1)),
        )


def restrict_to_boundary(bulk):
    """Pull the t=0 slice of a bulk field to boundary data (phi, p, beta).

    phi carries every component A_mu at t=0; p^k = P^{k0}; beta^{kj} = P^{kj}.
    """
    if bulk.n_t < 1:
        raise ValueError("bulk field has no t=0 slice")
    A_last = bulk.A[-1]
    P_last = bulk.P[-1]
    phi = A_last.copy()
    p = P_last[:, 1:, 0, :].copy()
    beta = P_last[:, 1:, 1:, :].copy()
    return phi, p, beta


def vierbein_determinant(vf):
    """Per-site determinant eps(x) of the frame matrix."""
    return np.linalg.det(vf.e)


def _check_invertible(det, what="vierbein"):
    bad = np.argwhere(np.abs(det) < 1e-12)
    if bad.size:
        site = tuple(bad[0])
        raise ValueError(f"singular {what} at site {site}")


def palatini_map(vf):
    """Momentum field P(e) = eps e^e with components
    P^{mu nu}_{(IJ)} = det(e) (e^mu_I e^nu_J - e^nu_I e^mu_J) / 2, I < J.

    Returns an array (..., m, m, G) with G = m(m-1)/2 internal pair
    coefficients; skew in the spacetime pair and (by construction) in
    the internal pair.
    """
    e = vf.e
    m = vf.m
    det = np.linalg.det(e)
    _check_invertible(det)
    pairs = pair_list(m)
    out = np.zeros(e.shape[:-2] + (m, m, len(pairs)))
    for idx, (i, j) in enumerate(pairs):
        w = np.einsum("...m,...n->...mn", e[..., i], e[..., j])
        out[..., idx] = w - np.swapaxes(w, -1, -2)
    return 0.5 * det[..., None, None, None] * out


def metric_from_vierbein(vf):
    """Lorentz metric g = (e^{-1})^T eta e^{-1} per site."""
    det = np.linalg.det(vf.e)
    _check_invertible(det)
    inv = np.linalg.inv(vf.e)
    eta = np.ones(vf.m)
    eta[0] = -1.0
    return np.einsum("...im,i,...in->...mn", inv, eta, inv)


def _reject_resample(rng, base, amplitude, min_det=0.1, max_tries=200):
    """identity + amplitude*perturbation with per-site determinant floor."""
    e = base + amplitude * rng.standard_normal(base.shape)
    if amplitude == 0.0:
        return e
    for _ in range(max_tries):
        det = np.linalg.det(e)
        bad = det < min_det
        if not np.any(bad):
            return e
        e[bad] = base[bad] + amplitude * rng.standard_normal(e[bad].shape)
    raise RuntimeError("could not generate vierbein with det >= 0.1")


def random_vierbein(seed, n, m, amplitude):
    """Deterministic near-identity frame field (n, m, m)."""
    rng = np.random.default_rng(seed)
    base = np.tile(np.eye(m), (n, 1, 1))
    return VierbeinField(_reject_resample(rng, base, amplitude))


def random_boundary_state(seed, mesh, spec, amplitude):
    """Deterministic pseudo-random boundary state honoring all invariants."""
    rng = np.random.default_rng(seed)
    n, d, g, m = mesh.n_sites, mesh.d, spec.dim, mesh.m
    amp = float(amplitude)
    if amp < 0:
        raise ValueError("amplitude must be nonnegative")

    def rand(*shape):
        return amp * rng.standard_normal(shape) if amp > 0 else np.zeros(shape)

    beta = skew_project(rand(n, d, d, g), 1, 2)
    lam = skew_project(rand(n, d, d, g), 1, 2)
    base = np.tile(np.eye(m), (n, 1, 1))
    full = _reject_resample(rng, base, amp)
    return BoundaryState(
        a=rand(n, d, g),
        a0=rand(n, g),
        p=rand(n, d, g),
        beta=beta,
        Lambda=lam,
        Lambda0=rand(n, d, g),
        e=full[:, 1:, :],
        e0=full[:, 0, :],
    )


def random_bulk_field(seed, mesh, spec, amplitude):
    """Deterministic pseudo-random bulk field with skew momenta."""
    rng = np.random.default_rng(seed)
    n_t, n, m, g = mesh.n_t, mesh.n_sites, mesh.m, spec.dim
    amp = float(amplitude)
    if amp < 0:
        raise ValueError("amplitude must be nonnegative")
    if amp == 0:
        return BulkField(np.zeros((n_t, n, m, g)), np.zeros((n_t, n, m, m, g)))
    A = amp * rng.standard_normal((n_t, n, m, g))
    P = skew_project(amp * rng.standard_normal((n_t, n, m, m, g)), 2, 3)
    return BulkField(A, P)


# ---------------------------------------------------------------------------
# packed-vector codec for BoundaryState (independent degrees of freedom only)
# ---------------------------------------------------------------------------

def state_layout(n, d, g, m):
    """Block names, shapes and packed sizes in a fixed order."""
    npairs = len(pair_list(d))
    return [
        ("a", (n, d, g), n * d * g),
        ("a0", (n, g), n * g),
        ("p", (n, d, g), n * d * g),
        ("beta", (n, d, d, g), n * npairs * g),
        ("Lambda", (n, d, d, g), n * npairs * g),
        ("Lambda0", (n, d, g), n * d * g),
        ("e", (n, d, m), n * d * m),
        ("e0", (n, m), n * m),
    ]


def packed_size(n, d, g, m):
    return sum(size for _, _, size in state_layout(n, d, g, m))


def _pack_skew(arr):
    n, d = arr.shape[0], arr.shape[1]
    cols = [arr[:, k, j] for (k, j) in pair_list(d)]
    if not cols:
        return np.zeros((n, 0) + arr.shape[3:])
    return np.stack(cols, axis=1)


def _unpack_skew(packed, d):
    n = packed.shape[0]
    out = np.zeros((n, d, d) + packed.shape[2:])
    for idx, (k, j) in enumerate(pair_list(d)):
        out[:, k, j] = packed[:, idx]
        out[:, j, k] = -packed[:, idx]
    return out


def pack_state(state):
    """Flatten a BoundaryState into independent coordinates.

    Skew arrays contribute only their k < j entries.
    """
    parts = [
        state.a.reshape(-1),
        state.a0.reshape(-1),
        state.p.reshape(-1),
        _pack_skew(state.beta).reshape(-1),
        _pack_skew(state.Lambda).reshape(-1),
        state.Lambda0.reshape(-1),
        state.e.reshape(-1),
        state.e0.reshape(-1),
    ]
    return np.concatenate(parts)


def unpack_state(vec, n, d, g, m):
    """Inverse of :func:`pack_state`."""
    layout = state_layout(n, d, g, m)
    if vec.shape != (sum(s for _, _, s in layout),):
        raise ValueError("packed vector has wrong length")
    npairs = len(pair_list(d))
    pieces = {}
    off = 0
    for name, shape, size in layout:
        chunk = vec[off : off + size]
        off += size
        if name in ("beta", "Lambda"):
            pieces[name] = _unpack_skew(chunk.reshape(n, npairs, g), d)
        else:
            pieces[name] = chunk.reshape(shape)
    return BoundaryState(**pieces)


# ---------------------------------------------------------------------------
# snapshot serialization
# ---------------------------------------------------------------------------

def save_field(path, name, arr, mesh_dims, algebra_dim):
    """Write a field snapshot: shape header then flat values.

    Index layout of the flat block is the in-memory order: site-major,
    then mu/k component indices, then the algebra index.
    """
    arr = np.asarray(arr)
    with open(path, "w") as fh:
        fh.write(f"field {name}\n")
        fh.write("mesh " + " ".join(str(s) for s in mesh_dims) + "\n")
        fh.write(f"algebra_dim {algebra_dim}\n")
        fh.write("shape " + " ".join(str(s) for s in arr.shape) + "\n")
        fh.write("layout site-major, then component (mu/k), then algebra index\n")
        for v in arr.reshape(-1):
            fh.write(f"{v:.17g}\n")


def load_field(path):
    """Read a snapshot written by :func:`save_field`; returns (name, array)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines[0].startswith("field "):
        raise ValueError("not a field snapshot")
    name = lines[0].split(None, 1)[1]
    shape = tuple(int(s) for s in lines[3].split()[1:])
    values = np.array([float(v) for v in lines[5:] if v.strip()])
    return name, values.reshape(shape)
