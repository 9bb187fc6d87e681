import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from lfp import experiments as ex
from lfp.cli import main
from lfp.core import Dataset
from lfp.data import asym_2d, gen_data, random_1d, sine, xor_2d
from lfp.plot import Series, dual_axis, heatmap, identity_scatter, line_plot

SVG = "{http://www.w3.org/2000/svg}"

TINY_COMPARE = {
    "preset": "fig1_smooth",
    "widths": [4, 8],
    "seeds": [0, 1],
    "lattice": {"L_prime": 20.0, "K": 60},
    "train": {"lr_policy": "fixed", "learning_rate": 0.05, "max_steps": 300, "record_every": 100},
    "test_grid": {"lo": -1.0, "hi": 1.0, "n": 25},
}


# --- data ------------------------------------------------------------------


def test_sine_recipe():
    d = sine(1, 20)
    np.testing.assert_array_equal(d.X[:, 0], np.arange(20) / 20)
    np.testing.assert_allclose(d.y, np.sin(2 * np.pi * np.arange(20) / 20), atol=1e-15)


def test_xor_labels():
    d = xor_2d()
    assert d.M == 4 and d.d == 2
    np.testing.assert_array_equal(d.y, [1.0, -1.0, -1.0, 1.0])
    np.testing.assert_array_equal(np.abs(d.X), 0.5)


def test_generators_deterministic():
    assert random_1d(12, seed=3).to_csv() == random_1d(12, seed=3).to_csv()
    assert random_1d(12, seed=3).to_csv() != random_1d(12, seed=4).to_csv()
    assert asym_2d(5, 1).to_csv() == asym_2d(5, 1).to_csv()
    d = random_1d(12, seed=0)
    assert np.all(np.diff(d.X[:, 0]) > 0) and np.all(np.abs(d.X) <= 1)
    np.testing.assert_array_equal(random_1d(3, y=[1, 2, 3]).y, [1.0, 2.0, 3.0])


def test_generator_errors():
    for call in [lambda: gen_data("spiral"), lambda: random_1d(3, y=[1.0]), lambda: xor_2d(0.0),
                 lambda: sine(1, 0)]:
        with pytest.raises(ValueError):
            call()


# --- plot ------------------------------------------------------------------


def parse(svg):
    return ET.fromstring(svg)


def legend_entries(root):
    return [g for g in root.iter(SVG + "g") if g.get("class") == "legend-entry"]


def test_empty_series_is_valid_svg():
    root = parse(line_plot([], "empty", "x", "y"))
    assert root.tag == SVG + "svg"
    assert legend_entries(root) == []


def test_two_series_two_legend_entries():
    x = np.linspace(0, 1, 5)
    svg = line_plot([Series(x, x, "a"), Series(x, x ** 2, "b", "scatter")], "t", "x", "y")
    assert len(legend_entries(parse(svg))) == 2
    assert svg == line_plot([Series(x, x, "a"), Series(x, x ** 2, "b", "scatter")], "t", "x", "y")


def test_heatmap_cell_count():
    Z = np.arange(1600.0).reshape(40, 40)
    root = parse(heatmap(Z, (-1, 1, -1, 1), "h", points=np.array([[0.5, 0.5]])))
    assert sum(1 for r in root.iter(SVG + "rect") if r.get("class") == "cell") == 1600


def test_other_plots_parse():
    x = np.linspace(0, 1, 10)
    parse(identity_scatter(x, x + 0.01, "s", "nn", "lfp"))
    parse(dual_axis(x, x, x ** 2, "d", "v", "left", "right"))
    parse(line_plot([Series([1.0], [np.nan], "nan")], "degenerate", "x", "y"))


# --- experiment plumbing ---------------------------------------------------


def test_resolve_config_and_errors():
    cfg = ex.resolve_config("compare", {"preset": "fig2_xor"}, {"widths": [10]})
    assert cfg["widths"] == [10] and cfg["dataset"]["kind"] == "xor_2d" and cfg["command"] == "compare"
    assert cfg["init"]["w"] == ex.PRESETS["fig2_xor"]["init"]["w"]
    with pytest.raises(ex.ConfigError):
        ex.resolve_config("compare", {"preset": "nope"})
    with pytest.raises(ex.ConfigError):
        ex.resolve_config("compare", {"preset": "fig3_sweep"})
    with pytest.raises(ex.ConfigError):
        ex.validate_compare(ex.resolve_config("compare", {"widths": [5]}))
    with pytest.raises(ex.ConfigError):
        ex.validate_compare(ex.resolve_config("compare", {"seeds": []}))


def test_evaluation_grid_layout():
    g = ex.evaluation_grid({"lo": -1, "hi": 1, "n": 40}, 2)
    assert g.shape == (1600, 2)
    np.testing.assert_array_equal(g[:40, 1], -1.0)          # first row shares x2
    assert ex.evaluation_grid({"lo": 0, "hi": 1, "n": 800}, 1).shape == (800, 1)


def test_compare_report_single_width():
    cfg = ex.resolve_config("compare", {**TINY_COMPARE, "widths": [6]})
    rep = ex.run_compare(cfg)
    assert len(rep.aggregate()) == 1 and rep.aggregate()[0]["n_ok"] == 2
    agg = rep.aggregate()[0]
    assert agg["mean_L2"] == pytest.approx(np.mean([c["L2"] for c in rep.cells]))
    files = ex.compare_files(rep)
    assert {"compare_cells.csv", "compare_summary.csv", "discrepancy.svg", "overlay_w6.svg"} <= set(files)


def test_compare_xor_emits_heatmaps_and_scatter():
    raw = {**TINY_COMPARE, "preset": "fig2_xor", "widths": [20], "seeds": [0],
           "lattice": {"L_prime": 24.0, "K": 8}, "test_grid": {"lo": -1.0, "hi": 1.0, "n": 40}}
    files = ex.compare_files(ex.run_compare(ex.resolve_config("compare", raw)))
    for name in ("heatmap_nn_w20.svg", "heatmap_lfp_w20.svg", "scatter_w20.svg"):
        parse(files[name])
    assert sum(1 for r in parse(files["heatmap_lfp_w20.svg"]).iter(SVG + "rect") if r.get("class") == "cell") == 1600


def test_smoothness_regimes_ordering():
    res = ex.smoothness_regimes(random_1d(12, seed=0))
    assert res["fig1_rough"]["B"] > res["fig1_rough"]["A"]
    assert res["fig1_smooth"]["A"] > res["fig1_smooth"]["B"]
    assert res["fig1_rough"]["high_fraction"] > res["fig1_smooth"]["high_fraction"]


def test_flow_verify_small_suite():
    rep = ex.run_flow_verify(ex.resolve_config("flow-verify", {"instances": 3, "matrix_tests": 2,
                                                               "perturbations": 10}))
    kinds = [r["kind"] for r in rep.rows]
    assert kinds.count("lattice") == 3 and kinds.count("matrix") == 2
    assert {"zero_data", "rank_deficient"} <= set(kinds)
    assert rep.passed
    statuses = {r["kind"]: r["status"] for r in rep.rows}
    assert statuses["zero_data"] == "trivial" and statuses["rank_deficient"] == "precondition"


# --- CLI -------------------------------------------------------------------


def test_gen_data_deterministic(tmp_path):
    for sub in ("a", "b"):
        assert main(["gen-data", "--kind", "random_1d", "--param", "M=12", "--seed", "7",
                     "--out", str(tmp_path / sub)]) == 0
    a, b = (tmp_path / "a" / "random_1d.csv").read_bytes(), (tmp_path / "b" / "random_1d.csv").read_bytes()
    assert a == b
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["command"] == "gen-data" and manifest["seeds"] == [7]
    assert Dataset.load(tmp_path / "a" / "random_1d.csv").M == 12
    assert main(["gen-data", "--kind", "xor_2d", "--out", str(tmp_path / "x")]) == 0
    assert "generator choice" in json.loads((tmp_path / "x" / "manifest.json").read_text())["config"]["note"]


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["gen-data", "--kind", "random_1d", "--param", "M=oops", "--out", str(tmp_path)]) == 2
    assert main(["compare", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["sweep", "--config", str(bad)]) == 2
    assert main(["compare", "--widths", "3", "--out", str(tmp_path)]) == 2
    assert main(["solve", "--data", str(tmp_path / "none.csv")]) == 2
    assert main(["train", "--data", "x.csv", "--width", "7"]) == 2
    assert main(["no-such-command"]) == 2


def test_solve_and_train(tmp_path):
    main(["gen-data", "--kind", "sine", "--param", "M=8", "--out", str(tmp_path)])
    data = str(tmp_path / "sine.csv")
    assert main(["solve", "--data", data, "--A", "1.0", "--B", "0.5", "--L-prime", "1", "--K", "32",
                 "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "spectrum.csv").read_text().startswith("k1,re,im\n")
    pred = np.loadtxt(tmp_path / "s" / "prediction.csv", delimiter=",", skiprows=1)
    assert pred.shape == (800, 2)
    assert main(["solve", "--data", data, "--width", "40", "--K", "100", "--out", str(tmp_path / "p")]) == 0
    assert main(["train", "--data", data, "--width", "20", "--max-steps", "50", "--out", str(tmp_path / "t")]) == 0
    hist = (tmp_path / "t" / "history.csv").read_text().splitlines()
    assert hist[0] == "step,loss" and hist[-1].startswith("50,")
    net = json.loads((tmp_path / "t" / "net.json").read_text())
    assert len(net["w"]) == 20


def test_plot_command(tmp_path):
    main(["gen-data", "--kind", "sine", "--out", str(tmp_path)])
    assert main(["plot", "--csv", str(tmp_path / "sine.csv"), "--x", "x1", "--y", "y",
                 "--out", str(tmp_path / "fig")]) == 0
    parse((tmp_path / "fig" / "sine.svg").read_text())
    assert main(["plot", "--csv", str(tmp_path / "sine.csv"), "--x", "x1", "--y", "nope",
                 "--out", str(tmp_path / "fig")]) == 2
    main(["solve", "--data", str(tmp_path / "sine.csv"), "--A", "1", "--B", "1", "--K", "20",
          "--out", str(tmp_path / "s2")])


def test_compare_cli_and_manifest_rerun(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(TINY_COMPARE))
    code = main(["compare", "--config", str(cfg), "--out", str(tmp_path / "a")])
    assert code in (0, 1)                   # the trend check is not meaningful at this size
    code2 = main(["compare", "--config", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b")])
    assert code2 == code
    for name in ("compare_cells.csv", "compare_summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    m = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert m["manifest_version"] == 1 and m["seeds"][:2] == [0, 1]
    assert set(m["outputs"]) == {"compare_cells.csv", "compare_summary.csv"}
    assert m["version"].startswith("0.1.0")


def test_sweep_cli_single_v(tmp_path):
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps({"width": 40, "max_steps": 100, "lattice_K": 100, "n_test": 50}))
    assert main(["sweep", "--config", str(cfg), "--v", "2", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert len(lines) == 2 and lines[1].startswith("2,")
    parse((tmp_path / "sweep.svg").read_text())
    assert json.loads((tmp_path / "summary.json").read_text())["rows"] == 1


def test_flow_verify_cli(tmp_path):
    cfg = tmp_path / "f.json"
    cfg.write_text(json.dumps({"instances": 2, "matrix_tests": 1, "perturbations": 5}))
    assert main(["flow-verify", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "flow_verify.csv").read_text().startswith(",".join(ex.FLOW_COLUMNS))
