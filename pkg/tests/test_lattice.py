import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from defectgas import (
    AffineLattice,
    AntipodalDirection,
    FlowTime,
    InvalidDimension,
    InvalidOffset,
    NotUnimodular,
    OffsetClass,
    UnimodularMatrix,
    flow_matrix,
    lattice_point,
    rotation_to_direction,
)
from defectgas.lattice import LatticeBatch, gauss_reduce_batch, lll_reduce, rotations_to_directions

from conftest import random_unimodular


def test_flow_matrix_identity_at_zero():
    assert np.array_equal(flow_matrix(0.0, 3).entries, np.eye(3))


def test_flow_matrix_determinant():
    assert abs(np.linalg.det(flow_matrix(0.7, 3).entries) - 1.0) <= 1e-12


def test_flow_matrix_rejects_dimension_one():
    with pytest.raises(InvalidDimension):
        flow_matrix(1.0, 1)


def test_flow_time_radius_roundtrip():
    assert FlowTime.from_radius(1e-3).radius == pytest.approx(1e-3, rel=1e-14)
    with pytest.raises(ValueError):
        FlowTime(-1.0)


def test_rotation_fixes_e1():
    assert np.allclose(rotation_to_direction(np.array([1.0, 0.0])), np.eye(2))


def test_rotation_to_e2():
    K = rotation_to_direction(np.array([0.0, 1.0]))
    e1 = np.array([1.0, 0.0])
    assert np.allclose(e1 @ np.linalg.inv(K), [0.0, 1.0])
    assert np.allclose(np.array([0.0, 1.0]) @ K, e1)


def test_rotation_antipodal():
    with pytest.raises(AntipodalDirection):
        rotation_to_direction(np.array([-1.0, 0.0]))
    with pytest.raises(AntipodalDirection):
        rotation_to_direction(np.array([-1.0, 1e-11]) / np.linalg.norm([-1.0, 1e-11]))


unit = st.lists(st.floats(-1, 1, allow_nan=False), min_size=2, max_size=4).map(np.array).filter(
    lambda v: np.linalg.norm(v) > 0.1
).map(lambda v: v / np.linalg.norm(v)).filter(lambda v: v[0] > -0.99)


@given(unit)
def test_rotation_is_special_orthogonal(v):
    K = rotation_to_direction(v)
    assert np.allclose(K @ K.T, np.eye(v.size), atol=1e-12)
    assert np.linalg.det(K) == pytest.approx(1.0, abs=1e-12)
    e1 = np.eye(v.size)[0]
    assert np.allclose(v @ K, e1, atol=1e-12)


@given(st.lists(unit.filter(lambda v: v.size == 3), min_size=1, max_size=5))
def test_batch_rotation_matches_single(vs):
    batch = rotations_to_directions(np.array(vs))
    for v, K in zip(vs, batch):
        assert np.allclose(K, rotation_to_direction(v), atol=1e-14)


def test_lattice_point_examples():
    assert np.array_equal(lattice_point(AffineLattice(UnimodularMatrix(np.eye(2))), [2, 3]), [2.0, 3.0])
    assert np.array_equal(lattice_point(AffineLattice(UnimodularMatrix(np.eye(2)), [0.5, 0.5]), [0, 0]), [0.5, 0.5])
    M = UnimodularMatrix([[2.0, 0.0], [0.0, 0.5]])
    assert np.array_equal(lattice_point(AffineLattice(M), [1, 1]), [2.0, 0.5])


def test_unimodular_rejects_bad_determinant():
    with pytest.raises(NotUnimodular):
        UnimodularMatrix([[2.0, 0.0], [0.0, 1.0]])
    with pytest.raises(NotUnimodular):
        UnimodularMatrix([[0.0, 1.0], [1.0, 0.0]])


def test_offset_class_rational_requires_primitive():
    with pytest.raises(InvalidOffset):
        OffsetClass.rational(4, [2, 2])
    oc = OffsetClass.rational(3, [1, 0])
    assert oc.denominator == 3
    assert OffsetClass.from_dict(oc.to_dict()) == oc


def test_offset_classify():
    assert OffsetClass.classify([1.0, -2.0]).kind == "integer"
    assert OffsetClass.classify([0.5, 0.0]) == OffsetClass.rational(2, [1, 0])
    assert OffsetClass.classify([1 / math.sqrt(2), 1 / math.sqrt(3)]).kind == "irrational"


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_lll_preserves_lattice(seed, d):
    rng = np.random.default_rng(seed)
    M = random_unimodular(rng, d, steps=8)
    B, U = lll_reduce(M)
    assert np.allclose(U @ M, B, atol=1e-9)
    assert abs(round(np.linalg.det(U))) == 1
    assert np.all(np.linalg.norm(B, axis=1) <= np.linalg.norm(M, axis=1).max() + 1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gauss_reduction_is_reduced(seed):
    rng = np.random.default_rng(seed)
    Ms = np.array([random_unimodular(rng, 2, steps=10) for _ in range(8)])
    B, U = gauss_reduce_batch(Ms)
    for b, u, m in zip(B, U, Ms):
        assert np.allclose(u @ m, b, atol=1e-9)
        n1, n2 = b[0] @ b[0], b[1] @ b[1]
        assert n1 <= n2 + 1e-12
        assert abs(b[0] @ b[1]) <= 0.5 * n1 + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 3))
def test_lattice_batch_reduced_offset(seed, d):
    rng = np.random.default_rng(seed)
    Ms = np.array([random_unimodular(rng, d) for _ in range(3)])
    xis = rng.uniform(-1, 1, (3, d))
    b = LatticeBatch.from_arrays(Ms, xis)
    for i in range(3):
        # (k + xr) B = (m + xi) M when m = k U
        B = np.linalg.inv(b.Binv[i])
        k = rng.integers(-3, 4, d)
        m = k @ b.U[i]
        assert np.allclose((k + b.xr[i]) @ B, (m + xis[i]) @ Ms[i], atol=1e-9)


def test_affine_lattice_roundtrip():
    lat = AffineLattice(UnimodularMatrix([[2.0, 0.0], [0.0, 0.5]]), [0.25, 0.0])
    back = AffineLattice.from_dict(lat.to_dict())
    assert np.array_equal(back.basis.entries, lat.basis.entries)
    assert np.array_equal(back.offset, lat.offset)
