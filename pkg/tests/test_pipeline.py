"""End-to-end pipeline, its config file handling and the CLI wrapper."""

import json
import os

import numpy as np
import pytest

from porohom.cli import main
from porohom.pipeline import (
    DEFAULTS,
    STAGES,
    PipelineError,
    parse_config,
    render_table,
    run_pipeline,
)

# coarse settings so one full pipeline run takes a few seconds
FAST = {
    "gamma": "1.0",
    "cell_h": "0.1",
    "macro_h": "0.25",
    "modes": "4",
    "tau": "1e-4",
    "t_final": "4e-4",
    "snapshots": "0,4e-4",
    "oracle_tau": "2e-3",
    "oracle_horizon": "0.02",
    "svg": "true",
}


def fast_config(out_dir, **extra):
    overrides = dict(FAST)
    overrides["out_dir"] = str(out_dir)
    overrides.update(extra)
    return parse_config(overrides=overrides)


def test_defaults_cover_every_key():
    config = parse_config()
    assert set(config) == set(DEFAULTS)
    assert config["stages"] == tuple(s for s in STAGES if s != "oracle")
    assert config["sigma"] == 0.5


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "pipeline.cfg"
    path.write_text("# comment\n\ngamma = 2.5\nmodes=7\n")
    config = parse_config(path, overrides={"modes": "9"})
    assert config["gamma"] == 2.5
    assert config["modes"] == 9


def test_config_rejects_unknown_and_malformed(tmp_path):
    with pytest.raises(ValueError, match="unknown config key"):
        parse_config(overrides={"made_up": "1"})
    path = tmp_path / "bad.cfg"
    path.write_text("gamma\n")
    with pytest.raises(ValueError, match="expected key=value"):
        parse_config(path)
    with pytest.raises(ValueError, match="unknown stage"):
        parse_config(overrides={"stages": "mesh,warp"})
    with pytest.raises(ValueError):
        parse_config(overrides={"sigma": "1.5"})
    with pytest.raises(ValueError):
        parse_config(overrides={"svg": "maybe"})


def test_full_pipeline_products(tmp_path):
    out = tmp_path / "run"
    manifest = run_pipeline(fast_config(out))
    names = set(manifest["artifacts"])
    assert {"cell.mesh", "macro.mesh", "k_bar.csv", "spectrum.csv",
            "table3.txt", "kernel.csv", "macro_ledger.csv"} <= names
    assert any(n.startswith("macro_state_") for n in names)
    assert any(n.endswith(".svg") for n in names)
    # every artifact listed in the manifest exists and hashes match
    with open(out / "manifest.json") as fh:
        on_disk = json.load(fh)
    assert on_disk == {"config": manifest["config"],
                       "artifacts": manifest["artifacts"]}
    for name in names:
        assert (out / name).exists()
    assert not list(out.glob("*.partial"))


def test_pipeline_is_deterministic(tmp_path):
    m1 = run_pipeline(fast_config(tmp_path / "a"))
    m2 = run_pipeline(fast_config(tmp_path / "b"))
    assert m1["artifacts"] == m2["artifacts"]


def test_stage_subsets_resume_from_artifacts(tmp_path):
    out = tmp_path / "run"
    run_pipeline(fast_config(out, stages="mesh"))
    assert (out / "cell.mesh").exists()
    assert not (out / "k_bar.csv").exists()
    run_pipeline(fast_config(out, stages="cell-steady,eigen"))
    run_pipeline(fast_config(out, stages="kernel,macro"))
    assert (out / "macro_ledger.csv").exists()


def test_missing_stage_input_names_the_stage(tmp_path):
    with pytest.raises(PipelineError, match="missing input") as err:
        run_pipeline(fast_config(tmp_path / "run", stages="kernel"))
    assert err.value.stage == "kernel"


def test_oracle_stage_is_off_by_default_but_runs(tmp_path):
    out = tmp_path / "run"
    run_pipeline(fast_config(out, stages="mesh"))
    manifest = run_pipeline(fast_config(out, stages="oracle"))
    assert "oracle.csv" in manifest["artifacts"]


def test_failed_stage_keeps_partial_files_only(tmp_path):
    out = tmp_path / "run"
    run_pipeline(fast_config(out, stages="mesh,cell-steady,eigen"))
    # corrupt the spectrum so the kernel stage fails while reading
    (out / "spectrum.csv").write_text("k,lambda,a1,a2\n1,-4.0,0.1,0.1\n")
    with pytest.raises(PipelineError) as err:
        run_pipeline(fast_config(out, stages="kernel"))
    assert err.value.stage == "kernel"
    assert not (out / "kernel.csv").exists()


def test_render_tables():
    sweep = [(1.0, np.array([[0.0127, 0.0], [0.0, 0.0127]]))]
    text = render_table({"sweep": sweep}, "table1")
    assert "gamma" in text.splitlines()[0]
    assert "0.01270000" in text

    columns = [("h=0.02", np.arange(1.0, 11.0)), ("h=0.01", np.arange(1.0, 11.0))]
    text = render_table({"columns": columns}, "table2")
    assert len(text.splitlines()) == 11

    text = render_table({"lams": np.array([40.0, 51.0, 114.0]),
                         "coeffs": np.array([[-0.5, -0.5],
                                             [-0.4, 0.4],
                                             [0.02, 0.02]])}, "table3")
    assert len(text.splitlines()) == 4

    with pytest.raises(ValueError, match="unknown table"):
        render_table({}, "table9")


# ------------------------------------------------------------------- CLI


def test_cli_mesh_and_validation(tmp_path, capsys):
    out = tmp_path / "cell.mesh"
    code = main(["mesh", "--geometry", "cell", "--gamma", "1.0",
                 "--h", "0.1", "--out", str(out)])
    assert code == 0
    assert out.exists()
    assert "wrote" in capsys.readouterr().out

    code = main(["mesh", "--geometry", "cell", "--h", "0.1",
                 "--out", str(out)])
    assert code == 2
    assert "--gamma is required" in capsys.readouterr().err

    code = main(["mesh", "--geometry", "rect", "--h", "0.5", "--lx", "2",
                 "--ly", "1", "--out", str(tmp_path / "r.mesh")])
    assert code == 0


def test_cli_cell_chain(tmp_path, capsys):
    mesh = tmp_path / "cell.mesh"
    assert main(["mesh", "--geometry", "cell", "--gamma", "1.0",
                 "--h", "0.1", "--out", str(mesh)]) == 0
    kbar = tmp_path / "k_bar.csv"
    assert main(["cell-steady", "--mesh", str(mesh), "--out", str(kbar)]) == 0
    spectrum = tmp_path / "spectrum.csv"
    assert main(["eigen", "--mesh", str(mesh), "--modes", "4",
                 "--out", str(spectrum)]) == 0
    kernel = tmp_path / "kernel.csv"
    assert main(["kernel", "--spectrum", str(spectrum), "--kbar", str(kbar),
                 "--out", str(kernel)]) == 0
    capsys.readouterr()
    domain = tmp_path / "domain.mesh"
    assert main(["mesh", "--geometry", "rect", "--lx", "2.0",
                 "--ly", "1.0", "--h", "0.25", "--out", str(domain)]) == 0
    prefix = str(tmp_path / "macro")
    bc = ("left=natural:0,right=natural:0,top=natural:0,"
          "bottom=natural:0")
    code = main(["macro", "--mesh", str(domain), "--model", str(kernel),
                 "--sigma", "0.5", "--tau", "1e-4", "--t-final", "4e-4",
                 "--bc", bc, "--snapshots", "4e-4",
                 "--out-prefix", prefix])
    assert code == 0
    assert (tmp_path / "macro_ledger.csv").exists()
    capsys.readouterr()
    # a perforated cell mesh is not a macro domain: its hole boundary has
    # no condition and the command must refuse it cleanly
    code = main(["macro", "--mesh", str(mesh), "--model", str(kernel),
                 "--sigma", "0.5", "--tau", "1e-4", "--t-final", "4e-4",
                 "--bc", bc, "--out-prefix", str(tmp_path / "m2")])
    assert code == 2
    assert "no boundary condition" in capsys.readouterr().err


def test_cli_error_exit_codes(tmp_path, capsys):
    # unreadable mesh file is a validation error
    bad = tmp_path / "bad.mesh"
    bad.write_text("MESH2D 1\nNV 1\n")
    code = main(["cell-steady", "--mesh", str(bad),
                 "--out", str(tmp_path / "k.csv")])
    assert code == 2
    assert "error:" in capsys.readouterr().err

    code = main(["mesh", "--geometry", "cell", "--gamma", "99",
                 "--h", "0.1", "--out", str(tmp_path / "c.mesh")])
    assert code == 2

    # pipeline config errors are validation errors as well
    cfg = tmp_path / "p.cfg"
    cfg.write_text("made_up=1\n")
    code = main(["pipeline", "--config", str(cfg),
                 "--out", str(tmp_path / "run")])
    assert code == 2


def test_cli_pipeline_and_resume(tmp_path, capsys):
    out = tmp_path / "run"
    cfg = tmp_path / "p.cfg"
    cfg.write_text("".join(f"{k}={v}\n" for k, v in FAST.items()
                           if k != "svg") + "svg=false\n")
    code = main(["pipeline", "--config", str(cfg), "--out", str(out)])
    assert code == 0
    assert (out / "manifest.json").exists()
    capsys.readouterr()
    code = main(["pipeline", "--config", str(cfg), "--out", str(out),
                 "--only", "macro"])
    assert code == 0
    # missing inputs surface as a numbered failure, not a traceback
    code = main(["pipeline", "--config", str(cfg),
                 "--out", str(tmp_path / "fresh"), "--only", "macro"])
    assert code == 2
