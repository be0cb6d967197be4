import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hopquant.problem import (
    UNIFORM_SIGMA,
    MatrixParseError,
    ProblemInstance,
    as_spins,
    energy,
    generate_instance,
    instance_from_matrix,
    load_instance,
    local_field_exact,
    local_fields_exact,
    random_state,
    read_matrix_csv,
    save_instance,
)


def brute_energy(A, B, s):
    total = 0.0
    n = len(s)
    for i in range(n):
        for j in range(n):
            total += s[i] * A[i][j] * s[j]
    return -0.5 * total - sum(s[i] * B[i] for i in range(n))


def with_spin(s, i, v):
    out = np.array(s)
    out[i] = v
    return out


def test_energy_two_spins():
    inst = ProblemInstance(np.array([[0.0, 1.0], [1.0, 0.0]]), np.zeros(2))
    assert energy(inst, [1, 1]) == -1.0


def test_energy_even_without_field():
    inst = generate_instance(7, seed=3)
    s = random_state(7, np.random.default_rng(0))
    assert energy(inst, s) == pytest.approx(energy(inst, -s), abs=1e-12)


def test_energy_matches_double_loop():
    inst = generate_instance(3, A0=0.3, B_mode=[0.2, -0.7, 1.1], seed=11)
    for bits in range(8):
        s = [1 if bits >> k & 1 else -1 for k in range(3)]
        assert energy(inst, s) == pytest.approx(brute_energy(inst.A, inst.B, s), abs=1e-12)


def test_energy_dimension_mismatch():
    inst = generate_instance(4, seed=0)
    with pytest.raises(ValueError):
        energy(inst, [1, -1, 1])


def test_local_field_single_term():
    inst = ProblemInstance(np.array([[0.0, 1.0], [1.0, 0.0]]), np.zeros(2))
    assert local_field_exact(inst, [1, 1], 0) == 1.0


def test_local_field_flip_linearity():
    inst = generate_instance(6, A0=0.1, B_mode=0.5, seed=2)
    s = random_state(6, np.random.default_rng(1))
    i, j = 1, 4
    before = local_field_exact(inst, s, i)
    after = local_field_exact(inst, with_spin(s, j, -s[j]), i)
    assert after - before == pytest.approx(-2 * inst.A[i, j] * s[j], abs=1e-12)


def test_local_field_bad_index():
    inst = generate_instance(3, seed=0)
    with pytest.raises(ValueError):
        local_field_exact(inst, [1, 1, 1], 3)


def test_local_field_finite_difference_n5():
    inst = generate_instance(5, A0=-0.2, B_mode=np.array([0.3, -1.0, 0.0, 2.0, 0.5]), seed=9)
    s = random_state(5, np.random.default_rng(2))
    for i in range(5):
        fd = -(energy(inst, with_spin(s, i, 1)) - energy(inst, with_spin(s, i, -1))) / 2
        assert local_field_exact(inst, s, i) == pytest.approx(fd, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(2, 20),
    seed=st.integers(0, 2**32 - 1),
    A0=st.floats(-2, 2),
    beta=st.floats(-3, 3),
    dist=st.sampled_from(["uniform", "gaussian"]),
)
def test_field_is_energy_finite_difference(n, seed, A0, beta, dist):
    inst = generate_instance(n, dist, A0, beta, seed)
    s = random_state(n, np.random.default_rng(seed))
    H = local_fields_exact(inst, s)
    for i in range(n):
        fd = -(energy(inst, with_spin(s, i, 1)) - energy(inst, with_spin(s, i, -1))) / 2
        assert abs(H[i] - fd) <= 1e-10
        assert abs(local_field_exact(inst, s, i) - fd) <= 1e-10


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 15), seed=st.integers(0, 2**32 - 1), beta=st.floats(-3, 3))
def test_energy_sign_invariance(n, seed, beta):
    inst = generate_instance(n, B_mode=beta, seed=seed)
    flipped = ProblemInstance(inst.A, -inst.B, inst.A0, inst.sigma_A)
    s = random_state(n, np.random.default_rng(seed + 1))
    assert energy(inst, s) == pytest.approx(energy(flipped, -s), abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 40), seed=st.integers(0, 2**32 - 1), dist=st.sampled_from(["uniform", "gaussian"]))
def test_generated_instances_are_symmetric(n, seed, dist):
    inst = generate_instance(n, dist, A0=0.7, seed=seed)
    assert np.array_equal(inst.A, inst.A.T)
    assert np.all(np.diag(inst.A) == 0.0)


def test_generator_deterministic():
    a = generate_instance(50, "gaussian", 0.2, 1.0, seed=42)
    b = generate_instance(50, "gaussian", 0.2, 1.0, seed=42)
    assert np.array_equal(a.A, b.A) and np.array_equal(a.B, b.B)
    assert not np.array_equal(a.A, generate_instance(50, "gaussian", 0.2, 1.0, seed=43).A)


def test_uniform_moments_n200():
    inst = generate_instance(200, "uniform", A0=0.5, seed=7)
    off = inst.centered[np.triu_indices(200, 1)]
    assert abs(off.std() - UNIFORM_SIGMA) / UNIFORM_SIGMA < 0.05
    assert inst.sigma_A == UNIFORM_SIGMA
    assert abs(off.mean()) < 0.01


def test_field_modes():
    assert np.all(generate_instance(10, B_mode=0.0, seed=0).B == 0.0)
    inst = generate_instance(16, B_mode=2.0, seed=0)
    assert np.allclose(inst.B, 2.0 * 4.0 * UNIFORM_SIGMA)
    explicit = np.arange(16.0)
    assert np.array_equal(generate_instance(16, B_mode=explicit, seed=0).B, explicit)


def test_generator_rejects_small_n():
    with pytest.raises(ValueError):
        generate_instance(1)


def test_instance_invariants_enforced():
    with pytest.raises(ValueError):
        ProblemInstance(np.array([[0.0, 1.0], [2.0, 0.0]]), np.zeros(2))
    with pytest.raises(ValueError):
        ProblemInstance(np.array([[1.0, 1.0], [1.0, 0.0]]), np.zeros(2))
    inst = generate_instance(3, seed=0)
    with pytest.raises(ValueError):
        inst.A[0, 1] = 5.0


def test_spin_validation():
    with pytest.raises(ValueError):
        as_spins([1, 0, -1])
    assert as_spins([1, -1]).dtype == np.int8


def test_csv_roundtrip(tmp_path):
    inst = generate_instance(6, A0=0.2, B_mode=1.5, seed=4)
    save_instance(inst, tmp_path / "A.csv", tmp_path / "B.csv")
    back = load_instance(tmp_path / "A.csv", tmp_path / "B.csv")
    assert np.array_equal(back.A, inst.A)
    assert np.array_equal(back.B, inst.B)


def test_csv_forces_zero_diagonal():
    A = np.array([[3.0, 1.0], [1.0, 4.0]])
    inst = instance_from_matrix(A)
    assert np.all(np.diag(inst.A) == 0)
    assert inst.A0 == 1.0


def test_csv_asymmetry_names_cell(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("0,1,2\n1,0,3\n2,3.5,0\n")
    with pytest.raises(MatrixParseError) as exc:
        load_instance(p)
    assert (exc.value.row, exc.value.col) == (1, 2)


def test_csv_parse_error_position(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("0,1\nx,0\n")
    with pytest.raises(MatrixParseError) as exc:
        read_matrix_csv(p)
    assert (exc.value.row, exc.value.col) == (1, 0)


def test_csv_tolerates_tiny_asymmetry(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text(f"0,{1 + 1e-12!r}\n1,0\n")
    inst = load_instance(p)
    assert inst.A[0, 1] == inst.A[1, 0]
    assert math.isclose(inst.A[0, 1], 1.0)
