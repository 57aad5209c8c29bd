"""Structure constants, pairings and index gymnastics."""

from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

from collardyn import algebra as al

DATA = Path(__file__).parent / "data"


def levi_civita():
    eps = np.zeros((3, 3, 3))
    for (a, b, c), s in (((0, 1, 2), 1), ((1, 2, 0), 1), ((2, 0, 1), 1),
                         ((0, 2, 1), -1), ((2, 1, 0), -1), ((1, 0, 2), -1)):
        eps[a, b, c] = s
    return eps


def su2_defining_oracle():
    """Structure constants and trace form from 2x2 matrices, independently."""
    sigma = np.array([[[0, 1], [1, 0]],
                      [[0, -1j], [1j, 0]],
                      [[1, 0], [0, -1]]], dtype=complex)
    T = -0.5j * sigma
    eps = np.zeros((3, 3, 3))
    for b in range(3):
        for c in range(3):
            comm = T[b] @ T[c] - T[c] @ T[b]
            for a in range(3):
                # tr(T_a T_b) = -delta_ab / 2
                eps[a, b, c] = np.real(-2.0 * np.trace(comm @ T[a]))
    killing = np.einsum("cad,dbc->ab", eps, eps)
    return eps, killing


def lorentz_defining_oracle(d):
    """so(1,d) basis matrices and brute-force commutator coefficients."""
    m = 1 + d
    eta = np.diag(al.minkowski_eta(m))
    pairs = al.pair_list(m)
    mats = []
    for (i, j) in pairs:
        mat = np.zeros((m, m))
        mat[i, :] = eta[j]
        mat[j, :] = -eta[i]
        mats.append(mat)
    mats = np.stack(mats)
    basis = mats.reshape(len(pairs), -1).T
    eps = np.zeros((len(pairs),) * 3)
    for b in range(len(pairs)):
        for c in range(len(pairs)):
            comm = mats[b] @ mats[c] - mats[c] @ mats[b]
            coeff, *_ = np.linalg.lstsq(basis, comm.reshape(-1), rcond=None)
            eps[:, b, c] = coeff
    return mats, eps


class TestBuildAlgebra:
    def test_abelian_basics(self):
        spec = al.build_algebra("abelian", n=1)
        assert spec.dim == 1
        assert not np.any(spec.structure)
        assert_allclose(spec.pairing, [[1.0]])

    def test_su2_structure_is_levi_civita(self, su2):
        assert_allclose(su2.structure, levi_civita(), atol=1e-14)

    def test_su2_against_defining_representation_oracle(self, su2):
        eps, killing = su2_defining_oracle()
        assert_allclose(su2.structure, eps, atol=1e-12)
        assert_allclose(su2.pairing, killing, atol=1e-12)

    def test_su2_pairing_proportional_to_identity(self, su2):
        assert_allclose(su2.pairing, -2.0 * np.eye(3), atol=1e-12)

    def test_so13_dimension_and_brackets(self, so13):
        assert so13.dim == 6
        mats, eps_oracle = lorentz_defining_oracle(3)
        assert_allclose(so13.structure, eps_oracle, atol=1e-12)
        # [xi_01, xi_12] carries the eta_11 xi_02 pattern
        pairs = al.pair_list(4)
        i01, i12, i02 = pairs.index((0, 1)), pairs.index((1, 2)), pairs.index((0, 2))
        xi = np.zeros(6)
        zeta = np.zeros(6)
        xi[i01] = 1.0
        zeta[i12] = 1.0
        out = al.bracket(so13, xi, zeta)
        expected = np.zeros(6)
        expected[i02] = 1.0  # eta_11 = +1
        assert_allclose(out, expected, atol=1e-12)

    def test_so13_pair_signs_differ_boost_vs_rotation(self, so13):
        pairs = al.pair_list(4)
        i01, i12 = pairs.index((0, 1)), pairs.index((1, 2))
        boost = np.eye(6)[i01]
        rot = np.eye(6)[i12]
        assert al.pair(so13, boost, boost) * al.pair(so13, rot, rot) < 0
        # trace-form oracle in the defining representation: K = (m-2) tr(XY)
        mats, _ = lorentz_defining_oracle(3)
        tr_form = 2.0 * np.einsum("aij,bji->ab", mats, mats)
        assert_allclose(so13.pairing, tr_form, atol=1e-12)

    def test_so11_degenerate_form_substituted(self, so11):
        assert so11.dim == 1
        assert so11.is_abelian
        assert_allclose(so11.pairing, np.eye(1))

    def test_unsupported_kind(self):
        with pytest.raises(ValueError, match="unsupported"):
            al.build_algebra("e8")

    def test_bad_dimensions(self):
        with pytest.raises(ValueError):
            al.build_algebra("so", d=0)
        with pytest.raises(ValueError):
            al.build_algebra("abelian", n=0)

    def test_string_form_so(self):
        spec = al.build_algebra("so(1,3)")
        assert spec.dim == 6


class TestInvariants:
    @pytest.mark.parametrize("kind,kw", [("su2", {}), ("so", {"d": 2}),
                                         ("so", {"d": 3}), ("abelian", {"n": 3})])
    def test_structural_invariants(self, kind, kw):
        spec = al.build_algebra(kind, **kw)
        assert al.jacobi_residual(spec) < 1e-12
        assert al.ad_invariance_residual(spec) < 1e-12
        al.validate(spec)

    def test_bracket_bilinearity(self, su2):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x, y, z = rng.standard_normal((3, 3))
            alpha, beta = rng.standard_normal(2)
            lhs = al.bracket(su2, alpha * x + beta * y, z)
            rhs = alpha * al.bracket(su2, x, z) + beta * al.bracket(su2, y, z)
            assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_bracket_self_vanishes(self, so13):
        rng = np.random.default_rng(1)
        xi = rng.standard_normal(6)
        assert_allclose(al.bracket(so13, xi, xi), np.zeros(6), atol=1e-13)

    def test_abelian_bracket_zero(self):
        spec = al.build_algebra("abelian", n=4)
        rng = np.random.default_rng(2)
        out = al.bracket(spec, rng.standard_normal(4), rng.standard_normal(4))
        assert not np.any(out)


class TestPairingOps:
    def test_pair_with_zero(self, su2):
        assert al.pair(su2, np.ones(3), np.zeros(3)) == 0.0

    def test_pair_symmetric(self, so12):
        rng = np.random.default_rng(3)
        x, y = rng.standard_normal((2, 3))
        assert abs(al.pair(so12, x, y) - al.pair(so12, y, x)) < 1e-13

    def test_lower_raise_roundtrip(self, su2):
        rng = np.random.default_rng(4)
        v = rng.standard_normal((5, 3))
        back = al.raise_index(su2, al.lower_index(su2, v))
        assert np.max(np.abs(back - v)) < 1e-14

    def test_dimension_mismatch(self, su2):
        with pytest.raises(ValueError):
            al.bracket(su2, np.ones(2), np.ones(3))
        with pytest.raises(ValueError):
            al.pair(su2, np.ones(4), np.ones(4))
        with pytest.raises(ValueError):
            al.lower_index(su2, np.ones((2, 4)))


class TestSerialization:
    def test_roundtrip(self, so12):
        text = al.serialize(so12)
        back = al.deserialize(text)
        assert back.dim == so12.dim
        assert_allclose(back.structure, so12.structure)
        assert_allclose(back.pairing, so12.pairing)
        assert back.labels == so12.labels

    def test_golden_file(self, su2):
        golden = (DATA / "su2_algebra.txt").read_text()
        assert al.serialize(su2) == golden
