import numpy as np
import pytest

from nsmpc import augment
from nsmpc.bench import (SWEEP_COLUMNS, closed_loop, gen_mass_spring, gen_random_system,
                         generate, make_solver, mass_spring_dynamics, perf_profile, rows_to_csv,
                         spectral_radius, timing_sweep)


@pytest.mark.parametrize("seed", range(10))
def test_random_system_is_neutrally_stable(seed):
    prob = gen_random_system(8, 3, seed=seed)
    assert 0.999 <= spectral_radius(prob.A_xe) <= 1.001
    assert np.array_equal(prob.x0, np.full(8, 0.2))
    assert np.array_equal(prob.Q, np.eye(8)) and not prob.S.any()


def test_random_system_determinism_and_rank():
    assert gen_random_system(5, 2, seed=7).dumps() == gen_random_system(5, 2, seed=7).dumps()
    assert gen_random_system(5, 2, seed=7).dumps() != gen_random_system(5, 2, seed=8).dumps()
    for seed in range(100):
        augment.build(gen_random_system(4, 3, seed=seed, T=2).B_ue)
    with pytest.raises(ValueError):
        gen_random_system(2, 3)


def test_mass_spring_shapes_and_energy():
    prob = gen_mass_spring(6, 3)
    assert (prob.n_x, prob.n_u, prob.T) == (12, 3, 30)
    assert spectral_radius(prob.A_xe) == pytest.approx(1.0, abs=1e-6)
    assert np.array_equal(prob.x0, np.ones(12))
    aug = augment.build(gen_mass_spring(2, 2).B_ue)
    assert aug.n_ustar == 2
    with pytest.raises(ValueError):
        gen_mass_spring(1, 1)
    with pytest.raises(ValueError):
        gen_mass_spring(3, 4)


def test_mass_spring_discretisation_matches_ode():
    from scipy.integrate import solve_ivp
    M, dt = 3, 0.5
    A, B = mass_spring_dynamics(M, 2, dt)
    K = 2 * np.eye(M) - np.eye(M, k=1) - np.eye(M, k=-1)
    x0, u = np.arange(1.0, 2 * M + 1) / 5, np.array([0.3, -0.2])

    def f(t, x):
        force = np.zeros(M)
        force[:2] = u
        return np.concatenate([x[M:], -K @ x[:M] + force])

    sol = solve_ivp(f, (0, dt), x0, rtol=1e-11, atol=1e-12)
    assert np.allclose(A @ x0 + B @ u, sol.y[:, -1], atol=1e-8)


def test_generate_dispatch(tmp_path):
    assert generate("mass-spring", 4, 1, 5).n_x == 4
    with pytest.raises(ValueError):
        generate("mass-spring", 5, 1, 5)
    with pytest.raises(ValueError):
        generate("bogus", 4, 1, 5)
    with pytest.raises(ValueError):
        generate("file", 4, 1, 5)
    p = tmp_path / "p.json"
    gen_random_system(3, 1, T=4).save(p)
    assert generate("file", 0, 0, 0, path=str(p)).T == 4
    with pytest.raises(ValueError):
        make_solver(gen_random_system(3, 1), "nope")


def test_closed_loop_from_zero_stays_at_zero():
    rows = closed_loop(gen_mass_spring(3, 1, T=10).with_x0(np.zeros(6)), "nullspace", 5)
    assert len(rows) == 5
    for r in rows:
        assert r["status"] == "Converged"
        assert abs(r["J"]) < 1e-8 and np.abs(r["u"]).max() < 1e-8


@pytest.mark.parametrize("solver", ["nullspace", "classical"])
def test_closed_loop_respects_bounds(solver):
    prob = gen_mass_spring(3, 2, T=15)
    rows = closed_loop(prob, solver, 20)
    assert len(rows) == 20 and all(r["status"] == "Converged" for r in rows)
    X, U = np.array([r["x"] for r in rows]), np.array([r["u"] for r in rows])
    assert np.abs(X).max() <= 4 + 1e-6 and np.abs(U).max() <= 0.5 + 1e-6


def test_closed_loop_aborts_on_failure():
    from nsmpc.ipm import SolverOptions
    rows = closed_loop(gen_mass_spring(3, 1, T=5), "nullspace", 5, SolverOptions(i_max=1))
    assert len(rows) == 1 and rows[0]["status"] == "IterLimit"


def test_timing_sweep_rows_and_counters():
    rows = timing_sweep("n_u", [1, 3], n_x=4, T=5, repeats=1)
    assert len(rows) == 4
    for r in rows:
        assert set(SWEEP_COLUMNS) <= set(r)
        assert r["status"] == "Converged" and r["time_per_iter_us"] > 0
        assert r["factorizations_per_iter"] == (1 if r["solver"] == "nullspace" else 2)
    csv_text = rows_to_csv(rows, SWEEP_COLUMNS)
    assert csv_text.splitlines()[0] == ",".join(SWEEP_COLUMNS)
    assert rows_to_csv([]) == ""


def test_timing_sweep_records_failures():
    rows = timing_sweep("n_u", [2, 9], n_x=4, T=3, solvers=["nullspace"], repeats=1)
    assert rows[0]["status"] == "Converged"
    assert rows[1]["status"].startswith("error")
    with pytest.raises(ValueError):
        timing_sweep("n_u", [], n_x=4)
    with pytest.raises(ValueError):
        timing_sweep("dt", [1], n_x=4)


def _rows(times):
    return [{"family": "random", "n_x": 2, "n_u": 1, "T": T, "solver": s, "status": "Converged",
             "time_per_iter_us": t} for s, ts in times.items() for T, t in enumerate(ts, 1)]


def test_profile_single_solver():
    pts = perf_profile(_rows({"a": [1.0, 2.0, 3.0]}))
    assert pts == [{"solver": "a", "ratio": 1.0, "fraction": 1.0}]


def test_profile_identical_solvers():
    pts = perf_profile(_rows({"a": [1.0, 2.0], "b": [1.0, 2.0]}))
    assert {(p["solver"], p["ratio"], p["fraction"]) for p in pts} == {("a", 1.0, 1.0),
                                                                        ("b", 1.0, 1.0)}


def test_profile_twice_as_slow():
    pts = perf_profile(_rows({"a": [2.0, 4.0, 6.0], "b": [1.0, 2.0, 3.0]}))
    a = [p for p in pts if p["solver"] == "a"]
    assert a == [{"solver": "a", "ratio": 2.0, "fraction": 1.0}]


def test_profile_failures_and_mismatch():
    rows = _rows({"a": [1.0, 1.0], "b": [2.0, 2.0]})
    rows[0]["status"] = "IterLimit"
    pts = perf_profile(rows)
    a = [p for p in pts if p["solver"] == "a"]
    assert a == [{"solver": "a", "ratio": 1.0, "fraction": 0.5}]
    with pytest.raises(ValueError, match="differ"):
        perf_profile(_rows({"a": [1.0, 2.0], "b": [1.0]}))
    with pytest.raises(ValueError):
        perf_profile([])
