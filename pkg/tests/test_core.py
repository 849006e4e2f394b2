import numpy as np
import pytest
from hypothesis import given, strategies as st

from mwumech import (
    AuctionInstance,
    ConvexDecomposition,
    ContractError,
    DimensionError,
    FractionalPoint,
    IntegralPoint,
    SeededRng,
    SingleMinded,
    generate_instance,
    verify_membership,
    zero_out,
)
from mwumech.core import check_verifier_output, restrict_to_support, snap


def test_fractional_point_support_is_recomputed():
    p = FractionalPoint(np.array([0.0, 0.5, 0.0, 2.0]))
    assert p.support == (1, 3)
    assert p.dimension == 4


def test_fractional_point_rejects_wrong_support_and_negatives():
    with pytest.raises(ValueError):
        FractionalPoint(np.array([0.0, 1.0]), support=(0,))
    with pytest.raises(ValueError):
        FractionalPoint(np.array([-0.5, 1.0]))


def test_fractional_point_is_read_only():
    p = FractionalPoint(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        p.coords[0] = 3.0


def test_from_coords_snaps_dust():
    p = FractionalPoint.from_coords([1e-14, 0.9999999999999, -1e-13])
    assert p.coords.tolist() == [0.0, 1.0, 0.0]
    assert p.support == (1,)


def test_snap_keeps_genuine_fractions():
    assert snap([0.5, 1e-6]).tolist() == [0.5, 1e-6]


def test_integral_point_validation():
    assert IntegralPoint((1, 0, 2)).coords == (1, 0, 2)
    with pytest.raises(ValueError):
        IntegralPoint((1, -1))
    with pytest.raises(ValueError):
        IntegralPoint((0.5,))


def test_zero_point_is_always_feasible(two_by_two):
    assert verify_membership(two_by_two, IntegralPoint.zeros(2))


def test_single_item_given_twice_is_infeasible():
    inst = AuctionInstance(1, (SingleMinded((0,), 1.0), SingleMinded((0,), 2.0)))
    assert not verify_membership(inst, IntegralPoint((1, 1)))
    assert verify_membership(inst, IntegralPoint((1, 0)))


def test_disjoint_singletons_feasible(two_by_two):
    # all four 0/1 allocations are feasible when bundles are disjoint
    for a in (0, 1):
        for b in (0, 1):
            assert verify_membership(two_by_two, IntegralPoint((a, b)))
    assert not verify_membership(two_by_two, IntegralPoint((2, 0)))


def test_membership_dimension_mismatch(two_by_two):
    with pytest.raises(DimensionError):
        verify_membership(two_by_two, IntegralPoint((1, 0, 0)))


def test_zero_out_identity_and_full(two_by_two):
    x = IntegralPoint((1, 1))
    assert zero_out(two_by_two, x, []) == x
    assert zero_out(two_by_two, x, [0, 1]) == IntegralPoint.zeros(2)


def test_zero_out_keeps_other_coordinates():
    inst = generate_instance("additive_uniform", 2, 2, seed=1)
    x = IntegralPoint((1, 0, 0, 1))
    assert verify_membership(inst, x)
    y = zero_out(inst, x, [3])
    assert y.coords == (1, 0, 0, 0)
    assert verify_membership(inst, y)


@given(st.integers(0, 10_000), st.data())
def test_zero_out_preserves_feasibility(seed, data):
    inst = generate_instance("single_minded_uniform", 3, 3, seed)
    pts = inst.integral_points()
    x = IntegralPoint(tuple(int(c) for c in pts[data.draw(st.integers(0, len(pts) - 1))]))
    idx = data.draw(st.sets(st.integers(0, inst.dimension - 1)))
    assert verify_membership(inst, zero_out(inst, x, idx))


def test_restrict_to_support():
    assert restrict_to_support(IntegralPoint((1, 2, 3)), [0, 2]).coords == (1, 0, 3)


def test_convex_decomposition_invariants():
    d = ConvexDecomposition(((0.25, IntegralPoint((1, 0))), (0.75, IntegralPoint((0, 1)))))
    assert d.size == 2
    assert np.allclose(d.mean(), [0.25, 0.75])
    with pytest.raises(ValueError):
        ConvexDecomposition(((0.5, IntegralPoint((1,))),))
    with pytest.raises(ValueError):
        ConvexDecomposition(((1.5, IntegralPoint((1,))), (-0.5, IntegralPoint((0,)))))
    with pytest.raises(DimensionError):
        ConvexDecomposition(((0.5, IntegralPoint((1,))), (0.5, IntegralPoint((0, 1)))))


def test_verifier_contract_check():
    v = np.array([1.0, 1.0])
    check_verifier_output(1.0, v, np.array([0.5, 0.5]), IntegralPoint((1, 0)))
    with pytest.raises(ContractError):
        check_verifier_output(1.0, v, np.array([1.0, 1.0]), IntegralPoint((1, 0)))


def test_rng_streams_are_reproducible_and_independent():
    a = SeededRng(42).stream("mechanism-stage").random(5)
    b = SeededRng(42).stream("mechanism-stage").random(5)
    c = SeededRng(42).stream("decomposition-sample").random(5)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, SeededRng(43).stream("mechanism-stage").random(5))


def test_rng_accepts_negative_and_large_seeds():
    SeededRng(-1).stream("instance-gen").random()
    SeededRng(2**70).stream("instance-gen").random()
