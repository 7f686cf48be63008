"""Rate fitting, delta selection, run artifacts, audit, and the CLI."""
import dataclasses
import math
import os

import numpy as np
import pytest

from fermibolt import cli
from fermibolt.config import (
    DELTA_CANDIDATES,
    ConfigError,
    ExperimentConfig,
    format_config,
    load_config,
)
from fermibolt.experiment import (
    DIST_EPS,
    FitError,
    InvariantViolation,
    audit_proof_chain,
    choose_delta,
    estimate_decay_rate,
    run_experiment,
)
from fermibolt.functionals import DiagnosticsRecord
from fermibolt.storage import CsvWriter, load_csv


def _fake_records(t, dist, lyap):
    out = []
    for ti, di, ei in zip(t, dist, lyap):
        out.append(
            DiagnosticsRecord(
                float(ti), 1.0, float(ei), float(ei), 0.0,
                float(di), float(di) / 2.0, float(di) / 2.0, 0.0,
                1.0, 1.0, 1.0, 1.0,
            )
        )
    return out


# ---------------------------------------------------------------- rate fit

def test_fit_recovers_synthetic_exponential():
    t = np.linspace(0.0, 8.0, 81)
    dist = 3.0 * np.exp(-0.7 * t)
    lyap = np.exp(-1.4 * t)
    report = estimate_decay_rate(_fake_records(t, dist, lyap), 0.5)
    assert math.isclose(report.lambda_obs, 0.7, rel_tol=1e-10)
    assert math.isclose(report.c_obs, 1.0, rel_tol=1e-10)
    assert report.r_squared >= 1.0 - 1e-12
    assert report.delta == 0.5
    start = int(np.nonzero(lyap <= 0.5)[0][0])
    assert report.window_start == t[start]
    assert report.n_fit_records == 81 - start


def test_fit_needs_two_records():
    t = np.array([0.0])
    with pytest.raises(FitError, match="two records"):
        estimate_decay_rate(_fake_records(t, [1.0], [1.0]))


def test_fit_requires_functional_to_halve():
    t = np.linspace(0.0, 5.0, 40)
    dist = np.exp(-t)
    lyap = np.ones_like(t)
    with pytest.raises(FitError, match="half"):
        estimate_decay_rate(_fake_records(t, dist, lyap))


def test_fit_window_minimum_count():
    t = np.linspace(0.0, 1.0, 12)
    lyap = np.concatenate([[1.0], np.full(11, 0.3)])
    dist = np.exp(-t)
    with pytest.raises(FitError, match="too short"):
        estimate_decay_rate(_fake_records(t, dist, lyap))


def test_fit_rejects_zero_time_extent():
    t = np.array([0.0] + [1.0] * 30)
    lyap = np.array([1.0] + [0.4] * 30)
    dist = np.full(31, 0.1)
    with pytest.raises(FitError, match="time extent"):
        estimate_decay_rate(_fake_records(t, dist, lyap))


def test_default_fit_matches_independent_regression(default_run):
    records = default_run.records
    rep = default_run.rate_report
    t = np.array([r.t for r in records])
    dist = np.array([r.dist_total for r in records])
    lyap = np.array([r.E for r in records])
    start = int(np.nonzero(lyap <= 0.5 * lyap[0])[0][0])
    mask = (np.arange(len(t)) >= start) & (dist > DIST_EPS)
    slope, intercept = np.polyfit(t[mask], np.log(dist[mask]), 1)
    assert math.isclose(-slope, rep.lambda_obs, rel_tol=1e-9)
    assert math.isclose(math.exp(intercept) / dist[0], rep.c_obs, rel_tol=1e-9)
    assert rep.n_fit_records == int(np.count_nonzero(mask))
    assert rep.window_start == float(t[mask][0])
    assert rep.window_end == float(t[mask][-1])


def test_rate_stable_under_time_refinement(default_run, refined_t_run):
    lam = default_run.rate_report.lambda_obs
    lam_fine = refined_t_run.rate_report.lambda_obs
    assert lam > 0.0
    assert abs(lam_fine - lam) / lam <= 0.05


def test_rate_stable_under_coarse_refinement():
    # a separate, cheaper sweep: halving either resolution away from a
    # coarse 32/64-point baseline moves the fitted rate by under ten percent
    base = ExperimentConfig(t_final=8.0)
    reports = {}
    for name, cells, nodes in (
        ("coarse_x", 32, 64),
        ("fine", 64, 64),
        ("coarse_v", 64, 32),
    ):
        config = dataclasses.replace(
            base, spatial_cells=cells, nodes_per_axis=nodes
        )
        reports[name] = run_experiment(config).rate_report
    lam = reports["fine"].lambda_obs
    assert lam > 0.0
    for name in ("coarse_x", "coarse_v"):
        assert reports[name].r_squared >= 0.99
        assert abs(reports[name].lambda_obs - lam) / lam <= 0.10


def test_observed_rate_dominates_gronwall_floor(default_run):
    rep = default_run.rate_report
    gronwall = rep.lemma_constants["gronwall_ratio_min"]
    assert gronwall > 0.0
    assert rep.lambda_obs >= 0.45 * gronwall


# ---------------------------------------------------------- delta selection

def test_choose_delta_prefers_larger_on_ties():
    t = np.linspace(0.0, 5.0, 51)
    h = np.exp(-t)
    # pairing proportional to the entropy: every surviving candidate decays
    # at the same rate, so the positivity filter alone decides (c * 30 < 1)
    assert choose_delta(t, h, -30.0 * h, np.sqrt(h)) == 0.02


def test_choose_delta_picks_best_worst_case_rate():
    t = np.linspace(0.0, 5.0, 51)
    h = np.exp(-t)
    pairing = np.exp(-2.0 * t)
    # positive pairing accelerates the augmented decay, more so for larger
    # couplings, and never threatens positivity
    assert choose_delta(t, h, pairing, np.sqrt(h)) == max(DELTA_CANDIDATES)


def test_choose_delta_requires_positivity():
    t = np.linspace(0.0, 5.0, 51)
    h = np.exp(-t)
    with pytest.raises(ConfigError, match="no candidate"):
        choose_delta(t, h, -1e6 * h, np.sqrt(h))


def test_choose_delta_needs_usable_points():
    t = np.linspace(0.0, 5.0, 51)
    h = np.exp(-t)
    with pytest.raises(ConfigError, match="too short"):
        choose_delta(t, h, 0.0 * h, np.zeros_like(h))


def test_auto_delta_resolution():
    config = ExperimentConfig(
        nodes_per_axis=16,
        spatial_cells=16,
        t_final=3.0,
        record_every=10,
        delta=None,
    )
    result = run_experiment(config)
    assert result.config.delta in DELTA_CANDIDATES
    assert result.rate_report is not None
    assert result.rate_report.delta == result.config.delta


# ------------------------------------------------------------ run behavior

def test_fixed_point_is_stationary(fixed_point_run):
    res = fixed_point_run
    n_steps = math.ceil(res.config.t_final / res.dt - 1e-12)
    assert n_steps >= 1000
    assert max(r.dist_total for r in res.records) <= 1e-12
    assert np.array_equal(res.final_state.f, res.initial.state.f)
    mass0 = res.records[0].mass
    assert max(abs(r.mass - mass0) for r in res.records) == 0.0
    # no decay window on a flat trajectory, so no fitted rate
    assert res.rate_report is None


def test_invariant_violation_attributes():
    err = InvariantViolation(7, "mass", "relative drift 3e-9")
    assert err.step_index == 7
    assert err.quantity == "mass"
    assert "step 7" in str(err)
    assert "mass" in str(err)
    assert isinstance(err, RuntimeError)


# ------------------------------------------------------------------- audit

def test_audit_requires_states(tiny_run):
    with pytest.raises(ValueError, match="no audit states"):
        audit_proof_chain(
            tiny_run.records,
            [],
            kernel=tiny_run.kernel,
            eq=tiny_run.equilibrium,
            delta=tiny_run.config.delta,
        )


def test_audit_rejects_unmatched_snapshot(tiny_run):
    bad = tiny_run.audit_states[1].copy()
    bad.time += 977.0
    with pytest.raises(ValueError, match="no matching record"):
        audit_proof_chain(
            tiny_run.records,
            [bad],
            kernel=tiny_run.kernel,
            eq=tiny_run.equilibrium,
            delta=tiny_run.config.delta,
        )


def test_audit_constants_on_tiny_run(tiny_run):
    constants = tiny_run.rate_report.lemma_constants
    for key in ("c1_min", "c6_min", "c9_min", "gronwall_ratio_min"):
        assert constants[key] > 0.0, key
    assert constants["c2_max_ratio"] > 0.0
    assert constants["c7_max"] >= constants["c6_min"]
    assert constants["c5_max"] >= constants["c4_min"] > 0.0
    assert constants["step1_excess_max"] <= 1e-8
    assert constants["samples_used"] >= 1


# --------------------------------------------------------------- artifacts

def test_run_artifacts_complete(default_run):
    out = default_run.output_dir
    assert out is not None
    report = default_run.rate_report

    records, warnings = load_csv(os.path.join(out, "diagnostics.csv"))
    assert warnings == 0
    assert len(records) == len(default_run.records)
    for got, want in zip(records, default_run.records):
        for a, b in zip(got.as_row(), want.as_row()):
            # the first record carries nan ratios, and nan != nan
            assert a == b or (math.isnan(a) and math.isnan(b))

    snap_dir = os.path.join(out, "snapshots")
    manifest = load_config(os.path.join(snap_dir, "manifest.cfg"))
    assert manifest.dt == default_run.dt
    assert manifest.delta == default_run.config.delta
    assert manifest.nodes_per_axis == 64
    assert manifest.spatial_cells == 64

    snaps = sorted(n for n in os.listdir(snap_dir) if n.endswith(".snap"))
    assert snaps[0] == "state_00000000.snap"
    assert len(snaps) == len(default_run.audit_states)

    kv = {}
    with open(os.path.join(out, "rate_report.kv"), encoding="utf-8") as fh:
        for line in fh:
            key, _, value = line.partition(" = ")
            kv[key.strip()] = value.strip()
    assert float(kv["lambda_obs"]) == report.lambda_obs
    assert float(kv["r_squared"]) == report.r_squared
    assert int(kv["n_fit_records"]) == report.n_fit_records
    assert float(kv["delta"]) == report.delta
    assert float(kv["c1_min"]) == report.lemma_constants["c1_min"]
    assert os.path.exists(os.path.join(out, "rate_report.txt"))


# --------------------------------------------------------------------- CLI

@pytest.fixture(scope="module")
def cli_run_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_run")
    config = ExperimentConfig(
        nodes_per_axis=16, spatial_cells=16, t_final=2.0, record_every=5
    )
    cfg_path = root / "run.cfg"
    cfg_path.write_text(format_config(config), encoding="utf-8")
    out_dir = root / "out"
    assert cli.main(["run", str(cfg_path), "--output-dir", str(out_dir)]) == 0
    return out_dir


def test_cli_run_writes_artifacts(cli_run_dir):
    assert (cli_run_dir / "diagnostics.csv").exists()
    assert (cli_run_dir / "snapshots" / "manifest.cfg").exists()
    assert (cli_run_dir / "rate_report.txt").exists()
    assert (cli_run_dir / "rate_report.kv").exists()


def test_cli_fit(cli_run_dir, capsys):
    assert cli.main(["fit", str(cli_run_dir / "diagnostics.csv")]) == 0
    out = capsys.readouterr().out
    assert "lambda_obs = " in out
    assert "r_squared = " in out


def test_cli_fit_reports_failure(tmp_path, capsys):
    path = tmp_path / "short.csv"
    t = np.array([0.0, 0.1, 0.2])
    with CsvWriter(str(path)) as writer:
        for rec in _fake_records(t, np.exp(-t), np.exp(-2.0 * t)):
            writer.write(rec)
    assert cli.main(["fit", str(path)]) == 1
    assert "fit failed" in capsys.readouterr().err


def test_cli_audit(cli_run_dir, capsys):
    rc = cli.main(
        ["audit", str(cli_run_dir / "diagnostics.csv"), str(cli_run_dir / "snapshots")]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "c1_min = " in out
    assert "gronwall_ratio_min = " in out


def test_cli_audit_missing_manifest(cli_run_dir, tmp_path, capsys):
    rc = cli.main(
        ["audit", str(cli_run_dir / "diagnostics.csv"), str(tmp_path)]
    )
    assert rc == 1
    assert "missing" in capsys.readouterr().err


def test_cli_threads_pins_environment(cli_run_dir, monkeypatch):
    names = (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "VECLIB_MAXIMUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    )
    for name in names:
        monkeypatch.setenv(name, "sentinel")
    assert cli.main(["--threads", "3", "fit", str(cli_run_dir / "diagnostics.csv")]) == 0
    for name in names:
        assert os.environ[name] == "3"


def test_cli_check_passes(capsys):
    assert cli.main(["check"]) == 0
    out = capsys.readouterr().out
    assert "all checks passed" in out
    assert "FAIL" not in out
