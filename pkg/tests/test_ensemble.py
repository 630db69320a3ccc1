import numpy as np
import pytest
from scipy import stats
from scipy.special import ndtri

from quadsparse._rng import RngSeed
from quadsparse.ensemble import (CapacityError, MeasurementEnsemble, NoiseSpec, Observations,
                                 SparseSignal, gen_ensemble, gen_signal, load_observations_csv,
                                 load_vector_csv, measure, objective, save_observations_csv,
                                 save_vector_csv)

from test_rng import philox_ref

M64 = (1 << 64) - 1


def entry_oracle(seed, n, i, k, l):
    key = RngSeed(*seed).key
    e = k * n + l
    word = philox_ref((e // 4 + 1, i, 0, 0), (key & M64, key >> 64))[e % 4]
    return float(ndtri(((word >> 12) + 0.5) * 2.0**-52))


def test_matrices_match_entry_oracle():
    ens = gen_ensemble(3, 4, (42, 0))
    for i in range(4):
        for k in range(3):
            for l in range(3):
                assert ens.matrix(i)[k, l] == entry_oracle((42, 0), 3, i, k, l)


def test_matrix_access_is_deterministic():
    ens = gen_ensemble(2, 3, (42, 0))
    assert ens.matrix(2).tobytes() == ens.matrix(2).tobytes()
    assert ens.matrix(2).tobytes() == gen_ensemble(2, 3, (42, 0)).matrix(2).tobytes()
    assert not np.array_equal(ens.dense(), gen_ensemble(2, 3, (42, 1)).dense())
    with pytest.raises(IndexError):
        ens.matrix(3)


def test_streamed_and_materialized_agree_bitwise(rng):
    mat = gen_ensemble(12, 7, (3, 0))
    st = gen_ensemble(12, 7, (3, 0), mode="streamed")
    np.testing.assert_array_equal(mat.dense(), st.dense())
    np.testing.assert_array_equal(mat.diagonals(), st.diagonals())
    S = [1, 4, 9]
    np.testing.assert_array_equal(mat.block(S), st.block(S))
    for nnz in (2, 10):
        z = np.zeros(12)
        z[rng.choice(12, nnz, replace=False)] = rng.standard_normal(nnz)
        np.testing.assert_allclose(mat.quad(z), st.quad(z), rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(mat.sym_apply(z), st.sym_apply(z), rtol=1e-12, atol=1e-12)
    i, k, l = [0, 6, 3], [1, 11, 0], [2, 5, 0]
    np.testing.assert_array_equal(st.entries(i, k, l), mat.dense()[i, k, l])


def test_streamed_entry_moments():
    ens = gen_ensemble(100, 100, (11, 0), mode="streamed")
    v = ens.dense().ravel()
    assert v.size == 10**6
    assert abs(v.mean()) < 0.01 and abs(v.var() - 1) < 0.01


def test_capacity_guard():
    with pytest.raises(CapacityError, match="streamed"):
        gen_ensemble(100, 100, 0, memory_cap=1000)
    assert gen_ensemble(100, 100, 0, mode="streamed", memory_cap=1000).m == 100


def test_quad_and_sym_apply_against_loops(rng):
    ens = MeasurementEnsemble.from_array(rng.standard_normal((5, 4, 4)))
    z = rng.standard_normal(4)
    A = ens.dense()
    q = [sum(A[i, k, l] * z[k] * z[l] for k in range(4) for l in range(4)) for i in range(5)]
    np.testing.assert_allclose(ens.quad(z), q, rtol=1e-12)
    np.testing.assert_allclose(ens.sym_apply(z), [(A[i] + A[i].T) @ z for i in range(5)], rtol=1e-12)
    assert np.all(ens.quad(np.zeros(4)) == 0)


def test_from_array_validation():
    assert MeasurementEnsemble.from_array(np.eye(3)).m == 1
    with pytest.raises(ValueError):
        MeasurementEnsemble.from_array(np.zeros((2, 3, 4)))
    with pytest.raises(ValueError):
        MeasurementEnsemble(0, 3, 1)
    with pytest.raises(ValueError):
        MeasurementEnsemble(3, 3, None)
    with pytest.raises(ValueError):
        MeasurementEnsemble(3, 3, 1, mode="lazy")


def test_gen_signal_cardinality_and_dense_case():
    x = gen_signal(100, 5, 3)
    assert np.count_nonzero(x.values) == 5 and len(x.support) == 5
    full = gen_signal(5, 5, 3)
    assert full.support == (0, 1, 2, 3, 4)
    with pytest.raises(ValueError):
        gen_signal(5, 0, 3)


@pytest.mark.slow
def test_gen_signal_support_is_uniform():
    n, s, draws = 20, 3, 10_000
    counts = np.zeros(n)
    for t in range(draws):
        counts[list(gen_signal(n, s, (t, 1)).support)] += 1
    assert stats.chisquare(counts).pvalue > 0.01


def test_sparse_signal_invariants():
    sig = SparseSignal.from_vector([0.0, -2.0, 0.5])
    assert sig.support == (1, 2) and sig.x_min == 0.5 and sig.norm == pytest.approx(np.sqrt(4.25))
    with pytest.raises(ValueError):
        SparseSignal(np.array([1.0, 1.0]), (0,), 1)
    with pytest.raises(ValueError):
        SparseSignal(np.array([1.0, 1.0]), (0, 1), 1)
    with pytest.raises(ValueError):
        sig.values[0] = 1.0


def test_measure_hand_cases():
    assert measure(MeasurementEnsemble.from_array(np.eye(2)), np.array([1.0, 2.0])).y[0] == 5
    A = MeasurementEnsemble.from_array(np.array([[0.0, 1.0], [0.0, 0.0]]))
    assert measure(A, np.array([1.0, 1.0])).y[0] == 1


def test_noise_is_reproducible_and_has_requested_std():
    ens = gen_ensemble(10, 4000, 1)
    x = gen_signal(10, 2, 1).values
    noise = NoiseSpec("gaussian", 0.1)
    a, b = measure(ens, x, noise, (1, 2)), measure(ens, x, noise, (1, 2))
    np.testing.assert_array_equal(a.y - a.clean_y, b.y - b.clean_y)
    assert np.std(a.y - a.clean_y) == pytest.approx(0.1, rel=0.05)
    lap = measure(ens, x, NoiseSpec("laplace", 0.1), (1, 2))
    assert np.std(lap.y - lap.clean_y) == pytest.approx(0.1, rel=0.08)
    with pytest.raises(ValueError):
        measure(ens, x, noise)
    with pytest.raises(ValueError):
        NoiseSpec("none", 1.0)
    with pytest.raises(ValueError):
        NoiseSpec("cauchy", 1.0)


def test_objective_cases(rng):
    ens = MeasurementEnsemble.from_array(np.array([[[2.0]]]))
    assert objective(ens, [2.0], np.array([2.0])) == 18.0
    ens = MeasurementEnsemble.from_array(rng.standard_normal((6, 5, 5)))
    x = rng.standard_normal(5)
    y = measure(ens, x).y
    assert objective(ens, y, x) == 0
    z = rng.standard_normal(5)
    A = ens.dense()
    loop = 0.0
    for i in range(6):
        q = 0.0
        for k in range(5):
            for l in range(5):
                q += A[i, k, l] * z[k] * z[l]
        loop += (q - y[i]) ** 2
    assert objective(ens, y, z) == pytest.approx(loop / 12, rel=1e-12)


def test_csv_round_trips(tmp_path, rng):
    v = rng.standard_normal(7)
    save_vector_csv(tmp_path / "v.csv", v)
    np.testing.assert_array_equal(load_vector_csv(tmp_path / "v.csv"), v)
    obs = Observations(v, NoiseSpec("gaussian", 0.1), v * 2)
    save_observations_csv(tmp_path / "y.csv", obs)
    back = load_observations_csv(tmp_path / "y.csv")
    np.testing.assert_array_equal(back.y, obs.y)
    np.testing.assert_array_equal(back.clean_y, obs.clean_y)
