import json
import math

import numpy as np
import pytest

from weighted_rb import cli, harness
from weighted_rb.harness import CacheError, ConfigError, ExperimentConfig


def small_config(tmp_path, **kw):
    base = dict(n_train=25, n_mc=8, n_max=3, K=10, T=4.0, output_dir=str(tmp_path))
    base.update(kw)
    return ExperimentConfig(**base)


def test_profiles():
    desk = harness.profile("desk")
    assert (desk.mesh_h, desk.K, desk.n_train, desk.n_mc, desk.n_max) == (1 / 3, 50, 100, 100, 15)
    paper = harness.profile("paper")
    assert (paper.T, paper.K, paper.dt, paper.n_train, paper.n_max) == (20.0, 100, 0.2, 500, 30)
    with pytest.raises(ConfigError):
        harness.profile("laptop")


def test_dt_consistency():
    with pytest.raises(ConfigError):
        ExperimentConfig(T=20.0, K=100, dt=0.3)
    cfg = ExperimentConfig(T=20.0, K=100, dt=0.2)
    assert abs(cfg.dt * cfg.K - cfg.T) <= 1e-12
    assert ExperimentConfig(T=10.0, K=40).dt == 0.25
    assert cfg.replace(K=50).dt == 0.4


def test_config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# desk run\nmesh_h = 1/3\nK = 25   # coarser\n\nmode = output\nrecord_timing = false\n")
    cfg = harness.load_config(p)
    assert cfg.mesh_h == 1 / 3 and cfg.K == 25 and cfg.dt == 0.8 and cfg.mode == "output"
    out = tmp_path / "saved.cfg"
    harness.save_config(cfg, out)
    assert harness.load_config(out) == cfg


@pytest.mark.parametrize(
    "text, lineno",
    [
        ("K = 10\nfoo = 3\n", 2),
        ("# c\n\nK = ten\n", 3),
        ("K 10\n", 1),
        ("mesh_h = 1/0\n", 1),
        ("record_timing = maybe\n", 1),
    ],
)
def test_config_errors_are_line_precise(tmp_path, text, lineno):
    p = tmp_path / "bad.cfg"
    p.write_text(text)
    with pytest.raises(ConfigError, match=rf"bad.cfg:{lineno}:"):
        harness.load_config(p)


def test_config_semantic_error(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("mode = dual\n")
    with pytest.raises(ConfigError, match="mode"):
        harness.load_config(p)


def test_digest_covers_snapshot_inputs():
    a = ExperimentConfig()
    assert a.snapshot_digest() == ExperimentConfig().snapshot_digest()
    for change in (dict(seed_mc=1), dict(n_mc=7), dict(K=25), dict(kl_correlation_length=1.0), dict(beta_alpha=20.0)):
        assert a.replace(**change).snapshot_digest() != a.snapshot_digest()
    # training-side settings do not invalidate the cache
    assert a.replace(n_train=7, seed_train=3, n_max=4).snapshot_digest() == a.snapshot_digest()


def test_snapshot_cache(tmp_path):
    cfg = small_config(tmp_path)
    problem = harness.build_problem(cfg)
    cache = harness.snapshot_cache_build(problem)
    path = harness.cache_path(cfg)
    assert path.exists()
    back = harness.SnapshotCache.load(path, cfg.snapshot_digest())
    assert np.array_equal(back.primal, cache.primal) and np.array_equal(back.samples, cache.samples)
    assert np.all((cache.outputs > 0) & (cache.outputs < 1))
    assert cache.primal.nbytes == cache.nbytes_expected() == 8 * cfg.n_mc * (cfg.K + 1) * problem.model.n
    with pytest.raises(CacheError):
        harness.SnapshotCache.load(path, cfg.replace(seed_mc=5).snapshot_digest())


def test_offline_structure_and_determinism(tmp_path):
    cfg = small_config(tmp_path / "a", mode="primal", weighting="uniform")
    res, rom_path, trace_path = harness.run_offline(cfg)
    rm, extra = harness.load_reduced_model(rom_path)
    assert rm.N == 3 and extra["basis_primal"].shape[1] == 3
    assert len(trace_path.read_text().splitlines()) == 1 + 3
    cfg_b = cfg.replace(output_dir=str(tmp_path / "b"))
    _, _, trace_b = harness.run_offline(cfg_b)
    assert trace_path.read_bytes() == trace_b.read_bytes()


def test_online_report(tmp_path):
    cfg = small_config(tmp_path, mode="output")
    res, rom_path, _ = harness.run_offline(cfg)
    rm = res.reduced_model
    xi_ref = np.append(np.zeros(10), 0.1)
    rep = harness.run_online(rom_path, xi_ref)
    assert all(math.isfinite(v) for v in rep.values() if isinstance(v, float))
    assert rep["delta_u"] >= 0 and rep["delta_s"] >= 0
    outside = np.append(np.full(10, 5.0), 20.0)
    rep = harness.online_report(rm, outside)
    assert not rep["in_support"]
    assert rep["delta_u_weighted"] == 0.0 and rep["delta_s_weighted"] == 0.0
    assert rep["delta_u"] > 0
    xi = cfg.density.sample(np.random.default_rng(0), 1)[0]
    assert harness.online_report(rm, xi) == harness.run_online(rom_path, xi)


def test_primal_rom_has_corrected_output(tmp_path):
    cfg = small_config(tmp_path, mode="primal")
    _, rom_path, _ = harness.run_offline(cfg)
    rep = harness.run_online(rom_path, np.append(np.zeros(10), 0.1))
    assert rep["N_dual"] == 1 and math.isfinite(rep["corrected_output"])


def test_convergence_outputs(tmp_path):
    cfg = small_config(tmp_path)
    data = harness.run_convergence(cfg)
    fig3a = (tmp_path / "fig3a.csv").read_text().splitlines()
    assert fig3a[0] == "N,rms_nonweighted,rms_weighted,rms_pod_projection"
    assert len(fig3a) == 1 + cfg.n_max
    assert (tmp_path / "fig3b.csv").read_text().splitlines()[0] == "N,out_nonweighted,out_weighted"
    fig2 = np.loadtxt(tmp_path / "fig2.csv", delimiter=",", skiprows=1)
    assert np.trapezoid(fig2[:, 1], fig2[:, 0]) == pytest.approx(1.0, abs=1e-6)
    vals = np.loadtxt(tmp_path / "fig3a.csv", delimiter=",", skiprows=1)[:, 1:]
    assert np.all(np.isfinite(vals)) and np.all(vals > 0)
    for N, v in zip(data.n_values, data.rms_pod_projection):
        assert v == pytest.approx(math.sqrt(data.pod.tail(N)), rel=1e-6)
    assert np.all(data.rms_pod_projection <= data.rms_weighted * (1 + 1e-10))
    assert np.all(data.rms_pod_projection <= data.rms_nonweighted * (1 + 1e-10))
    assert (tmp_path / "pod_eigenvalues.csv").read_text().startswith("index,sigma\n")
    raw = (tmp_path / "fig3a.csv").read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")


def test_config_self_test_paper_profile():
    st = harness.config_self_test(harness.profile("paper"))
    assert (st["T"], st["K"], st["dt"], st["Q"], st["a"], st["mean"]) == (20.0, 100, 0.2, 10, 2.0, 10.0)
    assert st["n_train"] == 500 and st["alpha_bar"] == 1.0
    assert st["xi_ref"] == [0.0] * 10 + [0.1]
    assert 1000 <= st["dofs"] <= 1300


# --- CLI ----------------------------------------------------------------------


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_cli_mesh(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "mesh", "--mesh-h", "1/2", "--output-dir", str(tmp_path))
    assert code == 0 and "nodes=162" in out
    assert (tmp_path / "mesh.txt").exists()


def test_cli_offline_online(tmp_path, capsys):
    args = ["--output-dir", str(tmp_path), "--n-train", "20", "--n-max", "2", "--K", "10", "--T", "4", "--mode", "output"]
    code, out, _ = run_cli(capsys, "offline", *args)
    assert code == 0 and "N=2 Ntilde=2" in out
    rom = tmp_path / "rom-output-uniform.bin"
    code, out, _ = run_cli(capsys, "online", str(rom), "--xi-ref")
    assert code == 0
    rep = json.loads(out)
    assert rep["N"] == 2 and rep["delta_s"] >= 0
    code, out, err = run_cli(capsys, "online", str(rom), "--xi", ",".join(["3"] * 10 + ["20"]))
    assert code == 0 and "outside the support" in err
    assert json.loads(out)["delta_s_weighted"] == 0.0
    code, _, err = run_cli(capsys, "online", str(rom), "--xi", "1,2")
    assert code == cli.EXIT_CONFIG and err.startswith("error[config]:")


def test_cli_cache_and_errors(tmp_path, capsys):
    base = ["--output-dir", str(tmp_path), "--n-mc", "3", "--K", "5", "--T", "2"]
    code, out, _ = run_cli(capsys, "cache", "build", *base)
    assert code == 0 and "samples=3" in out
    code, out, _ = run_cli(capsys, "cache", "verify", *base)
    assert code == 0 and "ok" in out
    path = harness.cache_path(ExperimentConfig(output_dir=str(tmp_path), n_mc=3, K=5, T=2.0))
    code, _, err = run_cli(capsys, "cache", "verify", *base, "--path", str(path), "--seed-mc", "99")
    assert code == cli.EXIT_CACHE and err.startswith("error[cache]:")
    code, _, err = run_cli(capsys, "offline", "--K", "abc")
    assert code == cli.EXIT_CONFIG and "--K" in err
    bad = tmp_path / "bad.cfg"
    bad.write_text("n_max = 3\nwhatever = 1\n")
    code, _, err = run_cli(capsys, "offline", "--config", str(bad))
    assert code == cli.EXIT_CONFIG and "bad.cfg:2:" in err
    code, _, err = run_cli(capsys, "online", str(tmp_path / "missing.bin"), "--xi-ref")
    assert code == cli.EXIT_IO and err.startswith("error[io]:")
    code, _, err = run_cli(capsys, "offline", "--dt", "0.3")
    assert code == cli.EXIT_CONFIG
