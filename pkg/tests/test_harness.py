import csv
import json
import math

import numpy as np
import pytest

from syncwave.errors import BracketError, ConfigurationError
from syncwave.harness import (
    CSV_COLUMNS,
    OUTPUT_DIR_ENV,
    apply_overrides,
    build,
    get_preset,
    preset_names,
    run,
    run_experiment,
    sweep,
    threshold_search,
    validate_experiment,
    validate_sweep,
)
from syncwave.harness.cli import main
from syncwave.harness.config import parse_override
from syncwave.harness.runner import read_summary


def preset(name, **overrides):
    return validate_experiment(apply_overrides(get_preset(name), overrides))


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def small_pair(**over):
    data = {
        "domain": {"modes": 8},
        "subsystems": [{"nu": 1.0, "gamma": 0.5}, {"nu": 1.0, "gamma": 0.5}],
        "integration": {"dt": 0.05, "T": 1.0, "sample_every": 2},
    }
    return apply_overrides(data, over)


# -- validation ---------------------------------------------------------------------


def test_unknown_key_reported_with_path():
    with pytest.raises(ConfigurationError) as e:
        validate_experiment(small_pair(**{"integration.dtt": 0.1}))
    assert e.value.field == "integration.dtt"


def test_nonpositive_nu_path():
    with pytest.raises(ConfigurationError) as e:
        validate_experiment(small_pair(**{"subsystems.0.nu": 0.0}))
    assert e.value.field == "subsystems.0.nu"


def test_pair_needs_two():
    data = small_pair()
    data["subsystems"].append({"nu": 1.0})
    with pytest.raises(ConfigurationError):
        validate_experiment(data)


def test_initial_length_checked():
    with pytest.raises(ConfigurationError):
        validate_experiment(small_pair(initial=[{}]))


@pytest.mark.parametrize("values", [[], [1.0, 1.0], [2.0, 1.0]])
def test_sweep_grid_must_increase(values):
    with pytest.raises(ConfigurationError) as e:
        validate_sweep({"axis": "kappa", "values": values, "base_preset": "E2"})
    assert e.value.field == "values"


def test_sweep_needs_one_base():
    with pytest.raises(ConfigurationError):
        validate_sweep({"axis": "kappa", "values": [1.0]})
    with pytest.raises(ConfigurationError):
        validate_sweep({"axis": "kappa", "values": [1.0], "base_preset": "E2", "base": small_pair()})


def test_T_multiple_of_dt():
    with pytest.raises(ConfigurationError) as e:
        build(validate_experiment(small_pair(**{"integration.T": 1.01})))
    assert e.value.field == "integration.T"


def test_split_rejects_nodal():
    cfg = validate_experiment(small_pair(**{"integration.scheme": "exponential_split",
                                            "coupling.operator": {"kind": "nodal", "equispaced": 2}}))
    with pytest.raises(ConfigurationError) as e:
        build(cfg)
    assert e.value.field == "integration.scheme"


def test_mode_out_of_range_path():
    cfg = validate_experiment(small_pair(**{"subsystems.1.forcing": {"kind": "single_mode", "k": 9}}))
    with pytest.raises(ConfigurationError) as e:
        build(cfg)
    assert e.value.field == "subsystems.1.forcing.k"


def test_unknown_preset():
    with pytest.raises(ConfigurationError) as e:
        get_preset("E99")
    assert e.value.field == "preset"


def test_modal_gap_factor_sets_kappa():
    system, _, _ = build(preset("E5", **{"coupling.operator.N": 3}))
    assert system.kappa == pytest.approx(2.0 * 0.1 * (16 - 1))


def test_parse_override_literals():
    assert parse_override("a.b=3") == (["a", "b"], 3)
    assert parse_override("x=[1, 2.5]") == (["x"], [1, 2.5])
    assert parse_override("s=nodal") == (["s"], "nodal")
    with pytest.raises(ConfigurationError):
        parse_override("novalue")


# -- initial data -----------------------------------------------------------------------


def test_random_field_pcg64_oracle():
    cfg = validate_experiment(small_pair(initial=[
        {"position": {"kind": "random", "seed": 7, "amplitude": 2.0, "decay": 0.5}}, {}]))
    _, state, _ = build(cfg)
    z = np.random.Generator(np.random.PCG64(7)).standard_normal(8)
    k = np.arange(1, 9)
    np.testing.assert_array_equal(state.positions[0], 2.0 * z / (k**2) ** 0.5)
    assert np.all(state.positions[1] == 0)


def test_constant_forcing_coefficients():
    cfg = validate_experiment(small_pair(**{"domain.modes": 16,
                                            "subsystems.0.forcing": {"kind": "constant", "value": 1.0}}))
    system, _, _ = build(cfg)
    b = system.basis
    k = np.arange(1, 17)
    # grid quadrature of the constant against each sampled sine
    ref = np.sqrt(2 / np.pi) * np.sin(np.outer(k, b.grid)) @ b.weights
    np.testing.assert_allclose(system.forcing[0], ref, atol=1e-12)
    # low modes agree with the exact L2 projection up to aliasing
    exact = np.sqrt(2 / np.pi) * (1 - np.cos(k * np.pi)) / k
    assert abs(system.forcing[0][0] - exact[0]) < 2e-3


# -- runs ---------------------------------------------------------------------------------


def test_decoupled_linear_residual(tmp_path):
    res = run(preset("decoupled-linear"), tmp_path)
    assert res.summary["status"] == "ok"
    assert res.summary["energy_residual"] < 1e-10
    assert float(read_summary(res.summary_path)["energy_residual"]) < 1e-10


def test_zero_data_all_zero_trajectory(tmp_path):
    res = run(validate_experiment(small_pair(**{"coupling.kappa": 3.0})), tmp_path)
    header, data = read_csv(res.csv_path)
    assert header == CSV_COLUMNS + ["l2_u1", "l2_u2"]
    assert np.all(data[:, 1:] == 0)
    np.testing.assert_allclose(data[:, 0], np.arange(0, 1.0001, 0.1), atol=1e-12)


def test_reruns_byte_identical(tmp_path):
    cfg = preset("E2", **{"integration.T": 2.0})
    a = run(cfg, tmp_path / "a")
    b = run(cfg, tmp_path / "b")
    assert a.csv_path.read_bytes() == b.csv_path.read_bytes()
    assert a.summary_path.read_bytes() == b.summary_path.read_bytes()


def test_summary_recomputed_from_csv(tmp_path):
    res = run(preset("E2", **{"integration.T": 10.0}), tmp_path)
    header, data = read_csv(res.csv_path)
    col = {name: data[:, i] for i, name in enumerate(header)}
    s = read_summary(res.summary_path)
    assert float(s["final_E"]) == col["E"][-1]
    assert float(s["final_V"]) == col["V"][-1]
    assert float(s["final_t"]) == col["t"][-1]
    assert int(s["samples"]) == len(data)
    tail = col["t"] >= col["t"][-1] / 2
    assert float(s["tail_sup_sync_pos_l2_sq"]) == np.max(col["sync_pos_l2_sq"][tail])
    total = col["sync_vel_sq"] + col["sync_pos_half_sq"]
    assert float(s["final_sync_total"]) == pytest.approx(total[-1], rel=1e-14)
    # log-linear fit of the synchronization error on the second half, by hand
    t, y = col["t"][tail], np.log(total[tail])
    slope = np.polyfit(t, y, 1)[0]
    assert float(s["omega"]) == pytest.approx(-slope, rel=1e-8)


def test_step_failure_recorded(tmp_path):
    cfg = preset("E2", **{"integration.dt": 2.0, "integration.T": 20.0, "integration.sample_every": 1,
                          "integration.max_iterations": 3, "initial.0.position.amplitude": 50.0})
    res = run(cfg, tmp_path)
    s = read_summary(res.summary_path)
    assert s["status"] == "step_failure"
    assert float(s["failure_time"]) == 0.0
    assert res.csv_path.exists()


def test_output_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "env"))
    res = run(validate_experiment(small_pair()))
    assert res.csv_path.parent == tmp_path / "env"
    res = run(validate_experiment(small_pair()), tmp_path / "explicit")
    assert res.csv_path.parent == tmp_path / "explicit"


@pytest.mark.parametrize("name", preset_names())
def test_presets_validate_and_run(name):
    cfg = preset(name, **{"integration.T": 10 * get_preset(name)["integration"]["dt"],
                          "integration.sample_every": 1, "analysis.fit_window": [0.0, 1.0]})
    res = run_experiment(cfg)
    assert res.summary["status"] == "ok"
    assert res.summary["samples"] == 11
    assert math.isfinite(res.summary["final_E"])


# -- sweeps -----------------------------------------------------------------------------


def test_single_point_sweep_matches_run(tmp_path):
    base = small_pair(**{"integration.T": 2.0, "subsystems.0.nu": 2.0,
                         "initial": [{"position": {"kind": "random", "seed": 1}}, {}]})
    scfg = validate_sweep({"axis": "kappa", "values": [3.0], "base": base,
                           "statistics": ["tail_sup_sync_pos_l2_sq", "final_E", "s_kappa"]})
    header, rows, path = sweep(scfg, tmp_path)
    assert header == ["kappa", "status", "tail_sup_sync_pos_l2_sq", "final_E", "s_kappa"]
    ref = run_experiment(validate_experiment(apply_overrides(base, {"coupling.kappa": 3.0}))).summary
    assert rows == [["3.0", "ok", repr(ref["tail_sup_sync_pos_l2_sq"]), repr(ref["final_E"]),
                     repr(ref["s_kappa"])]]
    assert path.read_text().splitlines()[1] == ",".join(rows[0])


def test_modal_sweep_defect_column():
    scfg = validate_sweep({"axis": "modal_n", "values": list(range(1, 9)), "base_preset": "E5",
                           "statistics": ["epsilon_L"]})
    _, rows, _ = sweep(scfg, write=False)
    assert len(rows) == 8
    for N, row in enumerate(rows, start=1):
        assert row[1] == "ok"
        assert abs(float(row[2]) - 1 / (N + 1)) < 1e-10


def test_sweep_failure_recorded_in_row():
    base = small_pair(**{"coupling.operator": {"kind": "modal", "N": 1}})
    scfg = validate_sweep({"axis": "modal_n", "values": [1, 20], "base": base, "statistics": ["s_kappa"]})
    _, rows, _ = sweep(scfg, write=False)
    assert rows[0][1] == "ok"
    assert rows[1][1].startswith("error:") and rows[1][2] == "nan"


def test_sweep_unknown_statistic():
    scfg = validate_sweep({"axis": "kappa", "values": [1.0], "base": small_pair(), "statistics": ["bogus"]})
    with pytest.raises(ConfigurationError) as e:
        sweep(scfg, write=False)
    assert e.value.field == "statistics.0"


# -- threshold ----------------------------------------------------------------------------


def _cheap_threshold_cfg():
    return preset("E2", **{"domain.modes": 8, "integration.dt": 0.05, "integration.sample_every": 20})


def test_threshold_bracket_error_at_lower_endpoint():
    with pytest.raises(BracketError) as e:
        threshold_search(_cheap_threshold_cfg(), 5.0, 10.0)
    assert e.value.field == "kappa_min"


def test_threshold_zero_horizon():
    with pytest.raises(ConfigurationError) as e:
        threshold_search(_cheap_threshold_cfg(), 0.02, 1.0, horizon=0.0)
    assert e.value.field == "criterion.horizon"


def test_threshold_reports_s_kappa():
    res = threshold_search(_cheap_threshold_cfg(), 0.02, 1.0)
    assert 0.02 < res.kappa_lower < res.kappa_star <= 1.0
    assert res.kappa_star - res.kappa_lower <= 0.05 * res.kappa_star
    # nu * lambda_1 + kappa with nu = 0.1, lambda_1 = 1
    assert res.s_kappa_star == pytest.approx(0.1 + res.kappa_star, rel=1e-14)
    assert res.omega > 0 and res.r_squared > 0.99


# -- command line -------------------------------------------------------------------------


def test_cli_list(capsys):
    assert main(["preset", "--list"]) == 0
    names = [line.split("\t")[0] for line in capsys.readouterr().out.splitlines()]
    assert names == preset_names()


def test_cli_bad_override(capsys, tmp_path):
    code = main(["preset", "E2", "subsystems.0.nu=-1", "--output-dir", str(tmp_path)])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "configuration" and err["field"] == "subsystems.0.nu"


def test_cli_simulate_toml(capsys, tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        'preset = "E2"\n[integration]\nT = 1.0\n[output]\nname = "short"\n'
    )
    assert main(["simulate", str(cfg), "--set", "coupling.kappa=5.0", "--output-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert f"summary={tmp_path / 'short.summary.txt'}" in out
    s = read_summary(tmp_path / "short.summary.txt")
    assert s["preset"] == "E2" and float(s["kappa"]) == 5.0 and float(s["final_t"]) == 1.0


def test_cli_step_failure_exit(capsys, tmp_path):
    args = ["preset", "E2", "integration.dt=2.0", "integration.T=20.0", "integration.max_iterations=3",
            "initial.0.position.amplitude=50.0", "--output-dir", str(tmp_path)]
    assert main(args) == 3
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "step_failure" and err["time"] == 0.0


def test_cli_sweep_toml(capsys, tmp_path):
    cfg = tmp_path / "sweep.toml"
    cfg.write_text(
        'axis = "modal_n"\nvalues = [1, 2, 3]\nstatistics = ["epsilon_L", "s_kappa"]\n'
        'base_preset = "E5"\n[output]\nname = "modal"\n'
    )
    assert main(["sweep", str(cfg), "--output-dir", str(tmp_path)]) == 0
    with open(tmp_path / "modal.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["modal_n", "status", "epsilon_L", "s_kappa"]
    assert [r[1] for r in rows[1:]] == ["ok"] * 3
    assert float(rows[3][2]) == pytest.approx(0.25, abs=1e-12)


def test_cli_defect(capsys):
    assert main(["defect", "--modes", "3", "--basis-modes", "64"]) == 0
    out = capsys.readouterr().out.strip()
    assert out.startswith("epsilon_L=") and abs(float(out.split("=")[1]) - 0.25) < 1e-12
    assert main(["defect", "--domain", "interval-neumann-laplacian", "--modes", "2"]) == 2


def test_cli_dump(capsys):
    assert main(["preset", "E4", "--dump"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["coupling"]["sine_link"] == 1.0
    validate_experiment(data)
