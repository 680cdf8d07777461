import numpy as np
import pytest

from weighted_rb import construction as cons
from weighted_rb.rom import BasisExtensionError, corrected_output, reduced_output, solve_reduced_primal
from weighted_rb.solvers import detailed_output, solve_primal
from weighted_rb.stochastics import DensityModel


# --- pod1 -------------------------------------------------------------------


def _xnorm(X, v):
    return np.sqrt(v @ (X @ v))


def test_pod1_single_snapshot(tiny_model, rng):
    X = tiny_model.xref
    v = rng.normal(size=tiny_model.n)
    E = np.zeros((5, tiny_model.n))
    E[2] = v
    mode = cons.pod1(E, X)
    ref = v / _xnorm(X, v)
    ref = ref if ref[np.argmax(np.abs(ref))] > 0 else -ref
    assert np.allclose(mode, ref, rtol=1e-10, atol=1e-12)


def test_pod1_rank_one(tiny_model, rng):
    X = tiny_model.xref
    w = rng.normal(size=tiny_model.n)
    E = np.outer([0.0, 1.0, -2.0, 0.5], w)
    mode = cons.pod1(E, X)
    assert abs(abs(mode @ (X @ w)) / _xnorm(X, w) - 1.0) < 1e-12
    assert mode[np.argmax(np.abs(mode))] > 0


def test_pod1_dominant(tiny_model, rng):
    X = tiny_model.xref
    a = rng.normal(size=tiny_model.n)
    b = rng.normal(size=tiny_model.n)
    a /= _xnorm(X, a)
    b -= (a @ X @ b) * a
    b /= _xnorm(X, b)
    mode = cons.pod1(np.array([3 * a, b]), X)
    assert abs(mode @ X @ a) == pytest.approx(1.0, abs=1e-10)


def test_pod1_zero(tiny_model):
    with pytest.raises(BasisExtensionError):
        cons.pod1(np.zeros((3, tiny_model.n)), tiny_model.xref)


# --- greedy -----------------------------------------------------------------


def test_greedy_config_validation(train):
    with pytest.raises(ValueError):
        cons.GreedyConfig(train, tol=None, n_max=None)
    with pytest.raises(ValueError):
        cons.GreedyConfig(np.zeros((0, 11)))
    with pytest.raises(ValueError):
        cons.GreedyConfig(train, mode="dual")
    with pytest.raises(ValueError):
        cons.GreedyConfig(train, growth="sometimes")


def test_greedy_trace_consistency(output_greedy, train):
    res = output_greedy
    steps = res.trace.steps
    assert [s.N for s in steps] == list(range(1, 11))
    assert all(s.N == s.N_dual for s in steps)
    # initial parameter has the largest xi_in
    assert steps[0].selected == int(np.argmax(train[:, -1]))
    rm_full = res.reduced_model
    for s, values, nxt in zip(steps, res.trace.estimator_values, steps[1:] + [None]):
        rm = rm_full.truncate(s.N, s.N_dual)
        recomputed = cons.estimator_sweep(rm, res.config, np.ones(len(train)))
        assert np.allclose(recomputed, values, rtol=1e-10, atol=0)
        assert s.argmax == int(np.argmax(recomputed))
        assert s.estimator_max == pytest.approx(recomputed.max(), rel=1e-10)
        if nxt is not None and not nxt.skipped:
            assert nxt.selected == s.argmax


def test_greedy_bases_orthonormal(output_greedy):
    red = output_greedy.reductor
    X = red.model.xref
    for Z in (red.primal.vectors, red.dual.vectors):
        assert np.allclose(Z.T @ X @ Z, np.eye(Z.shape[1]), atol=1e-10)


def test_greedy_single_parameter(coarse_model, density, rng):
    train = density.sample_uniform(rng, 1)
    res = cons.pod_greedy(coarse_model, cons.GreedyConfig(train, mode="output", n_max=2), density)
    e = [s.estimator_max for s in res.trace.steps]
    assert e[1] <= e[0] / 10
    # the primal estimator drops about 6x per iteration here, 10x after two
    res = cons.pod_greedy(coarse_model, cons.GreedyConfig(train, n_max=3), density)
    e = [s.estimator_max for s in res.trace.steps]
    assert e[1] < e[0] and e[2] <= e[0] / 10


def test_constant_density_same_selection(coarse_model, train, density):
    base = cons.GreedyConfig(train[:30], n_max=6)
    const = cons.GreedyConfig(train[:30], weighting="pdf", n_max=6, density=lambda xi: 0.37)
    a = cons.pod_greedy(coarse_model, base, density)
    b = cons.pod_greedy(coarse_model, const, density)
    assert [s.selected for s in a.trace.steps] == [s.selected for s in b.trace.steps]


def test_pdf_weighting_changes_selection(coarse_model, train, density):
    a = cons.pod_greedy(coarse_model, cons.GreedyConfig(train, n_max=8), density)
    b = cons.pod_greedy(coarse_model, cons.GreedyConfig(train, weighting="pdf", n_max=8), density)
    assert [s.selected for s in a.trace.steps] != [s.selected for s in b.trace.steps]


def test_tolerance_stop(coarse_model, train, density):
    res = cons.pod_greedy(coarse_model, cons.GreedyConfig(train[:20], tol=1e-1, n_max=None), density)
    assert res.trace.steps[-1].estimator_max <= 1e-1
    assert all(s.estimator_max > 1e-1 for s in res.trace.steps[:-1])


def test_alternate_growth(coarse_model, train, density):
    cfg = cons.GreedyConfig(train[:20], mode="output", n_max=3, growth="alternate")
    res = cons.pod_greedy(coarse_model, cfg, density)
    dims = [(s.N, s.N_dual) for s in res.trace.steps]
    assert dims == [(1, 1), (2, 1), (2, 2), (3, 2)]


def test_skip_and_reselect(coarse_model, density):
    # duplicated training parameter: once represented it must be skipped
    xi = density.sample_uniform(np.random.default_rng(2), 3)
    train = np.array([xi[0], xi[0], xi[1], xi[2]])
    res = cons.pod_greedy(coarse_model, cons.GreedyConfig(train, n_max=4), density)
    assert res.reductor.N == 4


def test_trace_csv(output_greedy, tmp_path):
    p = tmp_path / "trace.csv"
    output_greedy.trace.to_csv(p, timing=False)
    lines = p.read_text().splitlines()
    assert lines[0] == "iter,N,Ntilde,estimator_max,xi_in_selected,seconds"
    assert len(lines) == 11
    assert all(ln.endswith(",0.0") for ln in lines[1:])


def test_corrected_beats_uncorrected(output_greedy, density):
    rm = output_greedy.reduced_model
    m = output_greedy.reductor.model
    samples = density.sample(np.random.default_rng(50), 50)
    corr, unc = [], []
    for xi in samples:
        s_h = detailed_output(m, solve_primal(m, xi))
        c = solve_reduced_primal(rm, xi)
        corr.append(abs(s_h - corrected_output(rm, xi, c)))
        unc.append(abs(s_h - reduced_output(rm, c)))
    assert np.mean(corr) <= np.mean(unc)


# --- POD --------------------------------------------------------------------


@pytest.fixture(scope="module")
def snaps(coarse_model):
    xs = DensityModel().sample(np.random.default_rng(3), 4)
    return xs, np.array([solve_primal(coarse_model, xi).values for xi in xs])


def test_pod_rank_one(coarse_model):
    U = np.zeros((1, coarse_model.K + 1, coarse_model.n))
    U[0, 1:] = np.outer(np.arange(1, coarse_model.K + 1), np.ones(coarse_model.n))
    for method in ("snapshots", "svd"):
        pod = cons.pod_reference(coarse_model, snapshots=U, n_max=5, method=method)
        assert pod.modes.shape[1] == 1
        assert pod.eigenvalues[1] <= 1e-12 * pod.eigenvalues[0]


def test_pod_methods_agree(coarse_model, snaps):
    _, U = snaps
    a = cons.pod_reference(coarse_model, snapshots=U, n_max=10, method="snapshots")
    for method in ("spatial", "svd"):
        b = cons.pod_reference(coarse_model, snapshots=U, n_max=10, method=method)
        assert np.allclose(a.eigenvalues[:10], b.eigenvalues[:10], rtol=1e-8, atol=1e-12 * a.eigenvalues[0])
        assert a.total == pytest.approx(b.total, rel=1e-10)
        for N in (1, 5, 10):
            assert cons.pod_projection_error(coarse_model, b.modes, U, N) == pytest.approx(
                cons.pod_projection_error(coarse_model, a.modes, U, N), rel=1e-6
            )


def test_pod_duplicate_samples(coarse_model, snaps):
    _, U = snaps
    one = cons.pod_reference(coarse_model, snapshots=U[:1], n_max=5, method="snapshots")
    two = cons.pod_reference(coarse_model, snapshots=np.concatenate([U[:1], U[:1]]), n_max=5, method="snapshots")
    k = one.eigenvalues.size
    assert np.allclose(two.eigenvalues[:k], one.eigenvalues, rtol=1e-10, atol=1e-12 * one.eigenvalues[0])


def test_pod_trace_identity_and_tail(coarse_model, snaps):
    _, U = snaps
    X = coarse_model.xref
    pod = cons.pod_reference(coarse_model, snapshots=U, n_max=15)
    direct = coarse_model.dt / len(U) * sum(np.einsum("ki,ki->", u[1:], (X @ u[1:].T).T) for u in U)
    assert pod.eigenvalues.sum() == pytest.approx(direct, rel=1e-10)
    assert pod.total == pytest.approx(direct, rel=1e-12)
    assert np.allclose(pod.modes.T @ X @ pod.modes, np.eye(pod.modes.shape[1]), atol=1e-8)
    assert np.all(np.diff(pod.eigenvalues) <= 0) and pod.eigenvalues.min() >= -1e-10
    for N in range(0, 11):
        err = cons.pod_projection_error(coarse_model, pod.modes, U, N)
        assert err == pytest.approx(pod.tail(N), rel=1e-8)


def test_pod_full_rank_error():
    # a model on the unit mesh has few DOFs, so N = rank is reachable
    from weighted_rb.mesh import build_benchmark_mesh
    from weighted_rb.solvers import build_affine_model
    from weighted_rb.stochastics import kl_eigenpairs

    mesh = build_benchmark_mesh(1.0)
    m = build_affine_model(mesh, kl_eigenpairs(mesh, Q=4), dt=0.5, K=4)
    xs = DensityModel(n_kl=4).sample(np.random.default_rng(0), 2)
    U = np.array([solve_primal(m, xi).values for xi in xs])
    pod = cons.pod_reference(m, snapshots=U, n_max=100)
    rank = pod.modes.shape[1]
    assert rank <= 8
    assert cons.pod_projection_error(m, pod.modes, U, rank) <= 1e-10 * pod.eigenvalues[0]


def test_pod_optimal_vs_random(coarse_model, snaps, rng):
    _, U = snaps
    X = coarse_model.xref
    pod = cons.pod_reference(coarse_model, snapshots=U, n_max=10)
    R = cons._x_orthonormalize(rng.normal(size=(coarse_model.n, 10)), X)
    for N in (1, 3, 10):
        assert cons.pod_projection_error(coarse_model, pod.modes, U, N) <= cons.pod_projection_error(
            coarse_model, R, U, N
        ) * (1 + 1e-10)


def test_pod_memory_guard(coarse_model, snaps):
    with pytest.raises(MemoryError):
        cons.pod_reference(coarse_model, snapshots=snaps[1], method="snapshots", max_gram=10)


# --- Monte Carlo --------------------------------------------------------------


def test_mc_single_sample_matches_projection_error(coarse_model, snaps):
    xs, U = snaps
    pod = cons.pod_reference(coarse_model, snapshots=U[:1], n_max=5)
    col = cons.mc_rms_solution_error(coarse_model, U[:1], xs[:1], pod.modes, [1, 2, 3])
    for N, v in zip([1, 2, 3], col):
        assert v**2 == pytest.approx(cons.pod_projection_error(coarse_model, pod.modes, U[:1], N), rel=1e-10)


def test_mc_sample_mismatch(coarse_model, snaps):
    xs, U = snaps
    with pytest.raises(ValueError):
        cons.mc_rms_solution_error(coarse_model, U, xs[:2], np.eye(coarse_model.n)[:, :2], [1])


def test_mc_full_basis_zero(tiny_model, tiny_density):
    from weighted_rb.rom import BasisExtensionError, Reductor
    from weighted_rb.solvers import final_dual_state

    m = tiny_model
    red = Reductor(m, tiny_density)
    for v in np.eye(m.n):
        red.extend_primal(v)
    red.extend_dual(final_dual_state(m))
    for v in np.eye(m.n):
        try:
            red.extend_dual(v)
        except BasisExtensionError:
            pass
    rm = red.reduced_model()
    xs = tiny_density.sample(np.random.default_rng(1), 3)
    U = np.array([solve_primal(m, xi).values for xi in xs])
    s = np.array([detailed_output(m, u) for u in U])
    rms = cons.mc_rms_solution_error(m, U, xs, red.primal.vectors, [m.n], rm=rm)
    assert rms[0] <= 1e-9
    out = cons.mc_abs_output_error(rm.truncate(m.n, m.n), xs, s, [m.n])
    assert 0.0 <= out[0] <= 1e-9
