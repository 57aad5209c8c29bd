"""Lie algebra data and internal-index operations.

Every lattice field in this package stores its internal (gauge) components
as coefficient arrays over a fixed basis.  This module builds the basis
data: structure constants, an invariant bilinear pairing, and the index
gymnastics used by all inner-index contractions elsewhere.

Supported algebras:

* ``abelian(n)`` -- n commuting generators, identity pairing.
* ``su2``       -- built from the 2x2 defining representation.
* ``so(1,d)``   -- Lorentz algebra from the (1+d)x(1+d) defining
                   representation, basis xi_IJ with I < J.

The pairing is the trace form ``K_ab = tr(ad_a ad_b)`` with no
conventional rescaling.  When that form is degenerate (abelian algebras,
including so(1,1)), the identity matrix is substituted so that raising
and lowering stay well defined.
"""

from dataclasses import dataclass, field

import numpy as np

_SNAP_TOL = 1e-9


def pair_list(n):
    """Ordered list of index pairs (i, j) with i < j."""
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def minkowski_eta(m):
    """Diagonal of the Minkowski metric diag(-1, +1, ..., +1) in dim m."""
    eta = np.ones(m)
    eta[0] = -1.0
    return eta


@dataclass(eq=False)
class MinkowskiMetric:
    """Flat metric with signature (1, d) on an m = 1+d dimensional space."""

    dim: int

    @property
    def diagonal(self):
        return minkowski_eta(self.dim)

    @property
    def matrix(self):
        return np.diag(self.diagonal)


@dataclass(eq=False)
class LieAlgebraSpec:
    """Basis data of a Lie algebra.

    Attributes
    ----------
    dim : int
        Number of basis elements.
    structure : (dim, dim, dim) array
        Structure constants eps[a, b, c] in [xi_b, xi_c] = eps[a,b,c] xi_a.
    pairing : (dim, dim) array
        Invariant symmetric bilinear form on coefficient vectors.
    pairing_inverse : (dim, dim) array
        Inverse of ``pairing``.
    labels : list of str
        Basis element names.
    generators : array or None
        Matrices of the defining representation, shape (dim, r, r)
        (complex for su2, real for so(1,d), None for abelian).
    kind : str
        One of "abelian", "su2", "so".

    Instances are immutable after construction and safe to share.
    """

    dim: int
    structure: np.ndarray
    pairing: np.ndarray
    pairing_inverse: np.ndarray
    labels: list = field(default_factory=list)
    generators: np.ndarray = None
    kind: str = ""

    @property
    def is_abelian(self):
        return not np.any(self.structure)


def _snap(arr, tol=_SNAP_TOL):
    """Round entries that sit within tol of an integer."""
    rounded = np.round(arr)
    out = np.where(np.abs(arr - rounded) < tol, rounded, arr)
    return out


def _structure_from_generators(gens):
    """Extract eps[a,b,c] from commutators of defining-rep matrices."""
    g = gens.shape[0]
    basis = gens.reshape(g, -1).T  # (r*r, g)
    eps = np.zeros((g, g, g))
    for b in range(g):
        for c in range(g):
            comm = gens[b] @ gens[c] - gens[c] @ gens[b]
            coeff, residual, _, _ = np.linalg.lstsq(basis, comm.reshape(-1), rcond=None)
            recon = basis @ coeff
            if not np.allclose(recon, comm.reshape(-1), atol=1e-10):
                raise ValueError("commutator does not close on the basis")
            eps[:, b, c] = np.real_if_close(coeff, tol=1000)
    return _snap(eps)


def _killing_form(eps):
    """Trace form K_ab = tr(ad_a ad_b), ad_a given by (ad_a)^c_d = eps[c,a,d]."""
    return _snap(np.einsum("cad,dbc->ab", eps, eps))


def _su2_generators():
    sigma = np.array(
        [
            [[0, 1], [1, 0]],
            [[0, -1j], [1j, 0]],
            [[1, 0], [0, -1]],
        ],
        dtype=complex,
    )
    return -0.5j * sigma


def _lorentz_generators(d):
    """Defining so(1,d) matrices (M_IJ)^K_L = delta^K_I eta_JL - delta^K_J eta_IL."""
    m = 1 + d
    eta = minkowski_eta(m)
    gens = []
    for (i, j) in pair_list(m):
        mat = np.zeros((m, m))
        mat[i, :] += eta[j] * (np.arange(m) == j)
        mat[j, :] -= eta[i] * (np.arange(m) == i)
        gens.append(mat)
    return np.stack(gens)


def build_algebra(kind, n=1, d=None):
    """Build a :class:`LieAlgebraSpec`.

    Parameters
    ----------
    kind : str
        "abelian" (n generators), "su2", or "so" / "so(1,d)" with d >= 1.
    n : int
        Generator count for the abelian case.
    d : int
        Spatial dimension for so(1,d).
    """
    name = kind.strip().lower()
    if name.startswith("so"):
        if name not in ("so", "so1d"):
            # accept spellings like "so(1,3)" or "so13"
            digits = [c for c in name[2:] if c.isdigit()]
            if len(digits) >= 2 and digits[0] == "1":
                d = int("".join(digits[1:]))
        if d is None or d < 1:
            raise ValueError("so(1,d) requires d >= 1")
        gens = _lorentz_generators(d)
        eps = _structure_from_generators(gens)
        labels = [f"b{i}{j}" for (i, j) in pair_list(1 + d)]
        spec_kind = "so"
    elif name == "su2":
        gens = _su2_generators()
        eps = _structure_from_generators(gens)
        labels = ["e1", "e2", "e3"]
        spec_kind = "su2"
    elif name == "abelian":
        if n < 1:
            raise ValueError("abelian algebra needs n >= 1")
        gens = None
        eps = np.zeros((n, n, n))
        labels = [f"u{i}" for i in range(n)]
        spec_kind = "abelian"
    else:
        raise ValueError(f"unsupported algebra kind: {kind!r}")

    pairing = _killing_form(eps)
    svals = np.linalg.svd(pairing, compute_uv=False) if pairing.size else np.array([0.0])
    if svals.size == 0 or svals.min() < 1e-9 * max(1.0, svals.max()):
        # degenerate trace form (abelian sector): identity substitute
        pairing = np.eye(eps.shape[0])
    inv = np.linalg.inv(pairing)
    return LieAlgebraSpec(
        dim=eps.shape[0],
        structure=eps,
        pairing=pairing,
        pairing_inverse=inv,
        labels=labels,
        generators=gens,
        kind=spec_kind,
    )


def bracket(spec, xi, zeta):
    """Pointwise Lie bracket of coefficient arrays (algebra index last)."""
    xi = np.asarray(xi)
    zeta = np.asarray(zeta)
    if xi.shape[-1] != spec.dim or zeta.shape[-1] != spec.dim:
        raise ValueError("algebra dimension mismatch in bracket")
    if spec.is_abelian:
        return np.zeros(np.broadcast_shapes(xi.shape, zeta.shape))
    return np.einsum("abc,...b,...c->...a", spec.structure, xi, zeta)


def pair(spec, xi, zeta):
    """Invariant pairing <xi, zeta>, contracted over the last axis."""
    xi = np.asarray(xi)
    zeta = np.asarray(zeta)
    if xi.shape[-1] != spec.dim or zeta.shape[-1] != spec.dim:
        raise ValueError("algebra dimension mismatch in pair")
    return np.einsum("ab,...a,...b->...", spec.pairing, xi, zeta)


def _contract_axis(arr, mat, axis):
    moved = np.moveaxis(arr, axis, -1)
    out = moved @ mat
    return np.moveaxis(out, -1, axis)


def lower_index(spec, arr, axis=-1):
    """Lower an algebra index with the pairing form."""
    if np.asarray(arr).shape[axis] != spec.dim:
        raise ValueError("axis length does not match algebra dimension")
    return _contract_axis(np.asarray(arr), spec.pairing, axis)


def raise_index(spec, arr, axis=-1):
    """Raise an algebra index with the inverse pairing form."""
    if np.asarray(arr).shape[axis] != spec.dim:
        raise ValueError("axis length does not match algebra dimension")
    return _contract_axis(np.asarray(arr), spec.pairing_inverse, axis)


def jacobi_residual(spec):
    """Max |Jacobi identity| over all index quadruples."""
    eps = spec.structure
    t1 = np.einsum("ebc,aed->abcd", eps, eps)
    t2 = np.einsum("ecd,aeb->abcd", eps, eps)
    t3 = np.einsum("edb,aec->abcd", eps, eps)
    return float(np.max(np.abs(t1 + t2 + t3))) if eps.size else 0.0


def ad_invariance_residual(spec):
    """Max |<[xi_a,xi_b],xi_c> + <xi_b,[xi_a,xi_c]>| over basis triples."""
    eps, k = spec.structure, spec.pairing
    t1 = np.einsum("eab,ec->abc", eps, k)
    t2 = np.einsum("eac,be->abc", eps, k)
    return float(np.max(np.abs(t1 + t2))) if eps.size else 0.0


def validate(spec, tol=1e-12):
    """Raise if the spec violates its structural invariants."""
    eps = spec.structure
    if np.max(np.abs(eps + np.swapaxes(eps, 1, 2))) > tol:
        raise ValueError("structure constants not antisymmetric in lower indices")
    if jacobi_residual(spec) > tol:
        raise ValueError("Jacobi identity violated")
    if ad_invariance_residual(spec) > tol:
        raise ValueError("pairing is not ad-invariant")
    if np.max(np.abs(spec.pairing @ spec.pairing_inverse - np.eye(spec.dim))) > tol:
        raise ValueError("pairing inverse is not an inverse")
    if np.max(np.abs(spec.pairing - spec.pairing.T)) > tol:
        raise ValueError("pairing is not symmetric")


def serialize(spec):
    """Render the spec as structured text (golden-file friendly)."""
    lines = [f"dim {spec.dim}", "labels " + " ".join(spec.labels)]
    nz = np.argwhere(spec.structure != 0.0)
    lines.append(f"structure_nonzeros {len(nz)}")
    for a, b, c in nz:
        lines.append(f"{a} {b} {c} {spec.structure[a, b, c]:.17g}")
    lines.append("pairing")
    for row in spec.pairing:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def deserialize(text):
    """Parse the output of :func:`serialize` back into a spec.

    The defining representation is not stored; the restored spec carries
    ``generators=None``.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines[0].startswith("dim "):
        raise ValueError("malformed algebra file: missing dim header")
    dim = int(lines[0].split()[1])
    labels = lines[1].split()[1:]
    count = int(lines[2].split()[1])
    eps = np.zeros((dim, dim, dim))
    for ln in lines[3 : 3 + count]:
        a, b, c, v = ln.split()
        eps[int(a), int(b), int(c)] = float(v)
    if lines[3 + count] != "pairing":
        raise ValueError("malformed algebra file: missing pairing block")
    rows = [list(map(float, ln.split())) for ln in lines[4 + count : 4 + count + dim]]
    pairing = np.array(rows)
    return LieAlgebraSpec(
        dim=dim,
        structure=eps,
        pairing=pairing,
        pairing_inverse=np.linalg.inv(pairing),
        labels=labels,
        generators=None,
        kind="",
    )
