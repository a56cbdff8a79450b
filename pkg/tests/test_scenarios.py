import numpy as np
import pytest

from wbnmpc.ocp import OcpConfig
from wbnmpc.scenarios import (ConfigError, Scenario, Track, bootstrap_ci, circle_track, compute_metrics,
                              degradation, dumps_config, load_config, make_reference, mitigation,
                              run_closed_loop, shifted_params, stadium_track)
from wbnmpc.scenarios import sim as sim_mod
from wbnmpc.scenarios.cli import cli_main
from wbnmpc.scenarios.io import read_csv
from wbnmpc.specialists import OdeSpecialist, SpecialistLibrary
from wbnmpc.vehicle import make_regime, plant_step

CFG = OcpConfig()
SHORT = dict(duration=4.0, shift_time=2.5)


# --- track ------------------------------------------------------------------

def test_reference_on_circle():
    tr = circle_track(1.0, n=400)
    x = np.r_[tr.centerline[0], np.zeros(4)]
    refs = make_reference(tr, x, CFG)
    step = CFG.v_ref * CFG.Ts
    seg = 2 * np.pi / 400
    chord = 2 * np.sin(seg / 2)
    for k, r in enumerate(refs, 1):
        s = k * step
        i, t = int(s // chord), (s % chord) / chord
        # linear interpolation between waypoints of the unit circle
        a = np.array([np.cos(i * seg), np.sin(i * seg)])
        b = np.array([np.cos((i + 1) * seg), np.sin((i + 1) * seg)])
        np.testing.assert_allclose(r, a + t * (b - a), atol=1e-12)
        assert abs(np.linalg.norm(r) - 1.0) < 1e-4


def test_reference_advance_is_045m():
    tr = stadium_track()
    x = np.r_[tr.point_at(1.0), np.zeros(4)]
    refs = make_reference(tr, x, CFG)
    s_end, d = tr.project(refs[-1])
    assert d < 1e-12
    assert s_end - 1.0 == pytest.approx(15 * 1.5 * 0.02, abs=1e-12)


def test_reference_wraps_around():
    tr = circle_track(1.0)
    x = np.r_[tr.point_at(tr.length - 0.1), np.zeros(4)]
    refs = make_reference(tr, x, CFG)
    assert tr.project(refs[-1])[0] == pytest.approx(0.35, abs=1e-9)


def test_projection_tie_prefers_lower_segment():
    tr = Track.from_points([[0, 0], [2, 0], [2, 2], [0, 2]])
    # (1, 1) is equidistant from all four sides
    s, d = tr.project([1.0, 1.0])
    assert (s, d) == (1.0, 1.0)


def test_stadium_is_closed_and_validated():
    tr = stadium_track()
    gap = np.linalg.norm(tr.centerline[-1] - tr.centerline[0])
    assert gap < 0.011
    with pytest.raises(ValueError):
        stadium_track(straight=0.5, chicane_radius=0.7, chicane_angle=0.5)
    with pytest.raises(ValueError):
        Track.from_points([[0, 0], [0, 0], [1, 1]])


# --- metrics ----------------------------------------------------------------

def test_published_mitigation_triple():
    assert degradation(0.1214, 0.0602) == pytest.approx(101.661, abs=1e-3)
    assert degradation(0.0617, 0.0602) == pytest.approx(2.4917, abs=1e-3)
    assert mitigation(0.1214, 0.0617, 0.0602) == pytest.approx(97.549, abs=1e-3)


def test_trivial_metric_cases():
    assert degradation(0.3, 0.3) == 0.0
    assert mitigation(0.2, 0.2, 0.1) == 0.0


@pytest.fixture(scope="module")
def small_lib(base):
    regs = [base, make_regime(base, mu_scale=0.5)]
    return SpecialistLibrary([OdeSpecialist(p) for p in regs], ["nominal", "wet"])


@pytest.fixture(scope="module")
def short_pair(small_lib):
    sc = Scenario(seed=3, **SHORT)
    return run_closed_loop(sc, small_lib, CFG), run_closed_loop(sc.baseline(), small_lib, CFG)


def test_compute_metrics_pairing(short_pair):
    ad, bl = short_pair
    m = compute_metrics(ad, 2.5, bl)
    assert set(m.mitigation) == {"vx", "vy", "pos"}
    assert all(v >= 0 for v in m.rmse_pre.values()) and all(v >= 0 for v in m.rmse_post.values())
    assert compute_metrics(ad, 2.5).mitigation is None
    same = compute_metrics(bl, 2.5, bl)
    assert all(v == 0 for v in same.mitigation.values())
    with pytest.raises(ValueError):
        compute_metrics(ad, 2.5, _truncated(bl))


def _truncated(tr):
    from dataclasses import replace
    return replace(tr, t=tr.t[:-1], x=tr.x[:-1], cte=tr.cte[:-1])


def test_bootstrap_ci():
    x = np.arange(20.0)
    lo, hi = bootstrap_ci(x)
    assert lo <= np.median(x) <= hi
    assert bootstrap_ci(x) == (lo, hi)
    assert bootstrap_ci(np.full(10, 2.0)) == (2.0, 2.0)
    assert all(np.isnan(bootstrap_ci([])))


# --- simulation invariants ---------------------------------------------------

def test_shift_is_atomic(small_lib, base, monkeypatch):
    seen = []
    real = sim_mod.plant_step

    def spy(x, u, p, dt, substeps):
        seen.append(p)
        return real(x, u, p, dt, substeps)

    monkeypatch.setattr(sim_mod, "plant_step", spy)
    run_closed_loop(Scenario(adaptive=False, **SHORT), small_lib, CFG, base=base)
    k = int(round(2.5 / CFG.Ts))
    shifted = shifted_params(base, "friction_only")
    assert all(p == base for p in seen[:k])
    assert all(p == shifted for p in seen[k:])


def test_noise_only_touches_measurements(small_lib, base):
    tr = run_closed_loop(Scenario(tier="noisy_ode", sigma=0.05, **SHORT), small_lib, CFG, base=base)
    d = tr.y - tr.x
    assert np.all(d[:, :3] == 0) and np.std(d[:, 3:]) == pytest.approx(0.05, rel=0.15)
    k = int(round(2.5 / CFG.Ts))
    for i in (0, 10, k + 5):
        p = base if i < k else shifted_params(base, "friction_only")
        np.testing.assert_array_equal(tr.x[i + 1], plant_step(tr.x[i], tr.u[i], p, CFG.Ts, 10))


def test_frozen_run_keeps_nominal_weights(short_pair):
    _, bl = short_pair
    assert np.all(bl.w == [1.0, 0.0])
    assert np.all(np.isnan(bl.timing["governor"]))


def test_adaptive_run_moves_toward_wet_after_shift(short_pair):
    ad, _ = short_pair
    assert ad.w[-1, 1] > 0.5
    assert np.allclose(ad.w.sum(axis=1), 1.0)


def test_scenario_validation():
    for kw in (dict(tier="tier9"), dict(shift="ice"), dict(shift_time=30.0), dict(sigma=-1.0)):
        with pytest.raises(ValueError):
            Scenario(**kw)


# --- configuration -------------------------------------------------------------

def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[ocp]\nH = 10  # shorter horizon\n[scenario]\nseeds = 0-3,7\nadaptive = no\n"
                 "[vehicle]\nmu_scale = 0.9\n")
    cfg = load_config(p, ["governor.alpha=0.2", "scenario.tiers=ideal_ode"])
    assert cfg.ocp.H == 10 and cfg.seeds == (0, 1, 2, 3, 7) and cfg.adaptive is False
    assert cfg.vehicle.mu_scale == 0.9 and cfg.alpha == 0.2 and cfg.tiers == ("ideal_ode",)
    again = tmp_path / "snap.ini"
    again.write_text(dumps_config(cfg))
    assert dumps_config(load_config(again)) == dumps_config(cfg)


@pytest.mark.parametrize("bad", ["nosuch.key=1", "ocp.bogus=1", "ocp.H=zero", "scenario.tier=tier9",
                                 "governor.alpha=2", "noequals", "ocp.u_min=0.5,0.0"])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        load_config(None, [bad])


def test_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.ini")


# --- CLI ------------------------------------------------------------------------

RUN_SET = ["-s", "scenario.duration=4", "-s", "scenario.shift_time=2.5", "-s", "scenario.seed=2"]


def test_cli_run_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli_main(["run", "-o", str(a)] + RUN_SET) == 0
    assert cli_main(["run", "-o", str(b)] + RUN_SET) == 0
    for name in ("trace.csv", "metrics.csv", "baseline/trace.csv", "config.ini"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    rows = read_csv(a / "metrics.csv")
    assert {r["metric"] for r in rows} == {"vx", "vy", "pos"}
    assert "mitigation" in capsys.readouterr().out


def test_cli_matrix_and_report(tmp_path):
    out = tmp_path / "m"
    args = ["matrix", "-o", str(out), "-s", "scenario.tiers=ideal_ode", "-s", "scenario.shifts=none,friction_only",
            "-s", "scenario.seeds=0", "-s", "scenario.duration=4", "-s", "scenario.shift_time=2.5"]
    assert cli_main(args) == 0
    agg = read_csv(out / "metrics.csv")
    cells = {(r["tier"], r["shift"], int(r["adaptive"])) for r in agg}
    assert cells == {("ideal_ode", s, a) for s in ("none", "friction_only") for a in (0, 1)}
    assert len(agg) == 4 * 3
    assert "ideal_ode" in (out / "summary.md").read_text()
    rep = tmp_path / "rep"
    assert cli_main(["report", str(out), "-o", str(rep)]) == 0
    assert len(read_csv(rep / "plot_position_rmse.csv")) == 4


def test_cli_error_codes(tmp_path, capsys):
    assert cli_main(["fly"]) == 2
    assert "usage" in capsys.readouterr().err
    assert cli_main(["run", "-o", str(tmp_path / "x"), "-s", "nosection.k=1"]) == 2
    assert cli_main(["run", "-o", str(tmp_path / "x"), "--tier", "pinn_hybrid",
                     "-s", f"paths.library={tmp_path / 'nolib'}"]) == 4
    assert "manifest.json" in capsys.readouterr().err
    assert cli_main(["report", str(tmp_path / "nothing")]) == 4


def test_undefined_percentages_are_nan():
    assert np.isnan(degradation(0.1, 0.0))
    assert np.isnan(mitigation(0.1, 0.05, 0.1))  # baseline did not degrade
    assert mitigation(0.0, 0.0, 0.0) == 0.0


def test_shipped_run_file_matches_defaults():
    from importlib.resources import files

    from wbnmpc.scenarios import RunConfig
    path = files("wbnmpc") / "data" / "default_run.ini"
    assert dumps_config(load_config(str(path))) == dumps_config(RunConfig())
