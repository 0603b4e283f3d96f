"""End-to-end pipeline: mesh, cell solves, kernel, macro run.

A flat key=value config drives the stages.  Every artifact lands in one
output directory and is recorded in manifest.json with its sha256, so
reruns of an identical config can be diffed bit for bit.  A failing
stage leaves its unfinished outputs behind with a .partial suffix and
aborts with the stage named.
"""

import hashlib
import json
import os

import numpy as np

from .cell_spectral import read_spectrum_csv, solve_eigen, write_spectrum_csv
from .cell_steady import (
    read_permeability_csv,
    solve_cell_steady,
    write_permeability_csv,
)
from .cell_unsteady import solve_cell_unsteady, write_samples_csv
from .fem import StokesSystem
from .kernel_model import build_kernel_model, read_model_csv, write_model_csv
from .macro import MacroProblem, run, write_ledger_csv, write_state_csv
from .meshing import EllipseSpec, gen_cell_mesh, gen_rect_mesh, read_mesh, write_mesh
from .svgplot import render_field_svg

STAGES = ("mesh", "cell-steady", "eigen", "kernel", "oracle", "macro")

DEFAULTS = {
    "gamma": 3.0,
    "cell_h": 0.01,
    "macro_h": 0.05,
    "macro_lx": 2.0,
    "macro_ly": 1.0,
    "modes": 100,
    "epsilon": 0.0,
    "sigma": 0.5,
    "tau": 1e-5,
    "t_final": 7.5e-4,
    "snapshots": (0.0, 2.5e-4, 5e-4, 7.5e-4),
    "bc": "left=dirichlet:0,right=dirichlet:1,"
          "top=natural:0,bottom=natural:0",
    "f": (0.0, 0.0),
    "source": 0.0,
    "oracle_tau": 1e-4,
    "oracle_horizon": 0.2,
    "svg": True,
    "out_dir": "pipeline_out",
    "stages": ("mesh", "cell-steady", "eigen", "kernel", "macro"),
}

_STAGE_INPUTS = {
    "mesh": (),
    "cell-steady": ("cell.mesh",),
    "eigen": ("cell.mesh",),
    "kernel": ("k_bar.csv", "spectrum.csv"),
    "oracle": ("cell.mesh",),
    "macro": ("macro.mesh", "kernel.csv"),
}


class PipelineError(RuntimeError):
    """A stage failed; the original exception is chained as the cause."""

    def __init__(self, stage, message):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage


def _parse_float_list(text):
    items = [part.strip() for part in str(text).split(",")]
    return tuple(float(part) for part in items if part)


def _parse_bool(text):
    word = str(text).strip().lower()
    if word in ("1", "true", "yes", "on"):
        return True
    if word in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_stages(text):
    if isinstance(text, (tuple, list)):
        names = [str(x) for x in text]
    else:
        names = [part.strip() for part in str(text).split(",") if part.strip()]
    for name in names:
        if name not in STAGES:
            raise ValueError(f"unknown stage {name!r}, expected one of "
                             f"{', '.join(STAGES)}")
    if len(set(names)) != len(names):
        raise ValueError("duplicate stage names")
    return tuple(sorted(names, key=STAGES.index))

_PARSERS = {
    "gamma": float,
    "cell_h": float,
    "macro_h": float,
    "macro_lx": float,
    "macro_ly": float,
    "modes": int,
    "epsilon": float,
    "sigma": float,
    "tau": float,
    "t_final": float,
    "snapshots": _parse_float_list,
    "bc": str,
    "f": _parse_float_list,
    "source": float,
    "oracle_tau": float,
    "oracle_horizon": float,
    "svg": _parse_bool,
    "out_dir": str,
    "stages": _parse_stages,
}


def parse_config(path=None, overrides=None):
    """Resolve a pipeline config from defaults, a file and overrides.

    The file holds one key=value pair per line; blank lines and lines
    starting with # are skipped.  Overrides is a dict of raw string (or
    already typed) values applied last.  Unknown keys are rejected.
    """
    config = dict(DEFAULTS)
    raw = {}
    if path is not None:
        with open(path, encoding="ascii") as handle:
            for lineno, line in enumerate(handle, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValueError(
                        f"{path}:{lineno}: expected key=value, got {line!r}")
                key, value = line.split("=", 1)
                raw[key.strip()] = value.strip()
    if overrides:
        raw.update(overrides)
    for key, value in raw.items():
        if key not in _PARSERS:
            raise ValueError(f"unknown config key {key!r}")
        config[key] = _PARSERS[key](value)
    if not 0.0 <= config["sigma"] <= 1.0:
        raise ValueError("sigma must lie in [0, 1]")
    for key in ("cell_h", "macro_h", "tau", "oracle_tau", "oracle_horizon",
                "macro_lx", "macro_ly"):
        if config[key] <= 0.0:
            raise ValueError(f"{key} must be positive")
    if config["modes"] < 0:
        raise ValueError("modes must be nonnegative")
    if config["epsilon"] < 0.0:
        raise ValueError("epsilon must be nonnegative")
    if config["t_final"] < 0.0:
        raise ValueError("t_final must be nonnegative")
    return config


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class _StageWriter:
    """Tracks a stage's outputs so failures leave only .partial files."""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self._pending = []

    def path(self, name):
        partial = os.path.join(self.out_dir, name + ".partial")
        self._pending.append((partial, os.path.join(self.out_dir, name)))
        return partial

    def commit(self):
        done = []
        for partial, final in self._pending:
            os.replace(partial, final)
            done.append(os.path.basename(final))
        self._pending.clear()
        return done


def _stage_mesh(config, writer):
    cell = gen_cell_mesh(EllipseSpec(config["gamma"]), config["cell_h"])
    write_mesh(cell, writer.path("cell.mesh"))
    macro_mesh = gen_rect_mesh(config["macro_lx"], config["macro_ly"],
                               config["macro_h"])
    write_mesh(macro_mesh, writer.path("macro.mesh"))


def _stage_cell_steady(config, writer):
    mesh = read_mesh(os.path.join(writer.out_dir, "cell.mesh"))
    solution = solve_cell_steady(mesh)
    write_permeability_csv(solution.k_bar, writer.path("k_bar.csv"))


def _stage_eigen(config, writer):
    mesh = read_mesh(os.path.join(writer.out_dir, "cell.mesh"))
    system = StokesSystem(mesh)
    spectrum = solve_eigen(mesh, config["modes"], system=system)
    write_spectrum_csv(spectrum, writer.path("spectrum.csv"))
    shown = min(spectrum.eigenvalues.size, 3)
    text = render_table({"lams": spectrum.eigenvalues[:shown],
                         "coeffs": spectrum.coefficients[:shown]}, "table3")
    with open(writer.path("table3.txt"), "w", encoding="ascii") as handle:
        handle.write(text)


def _stage_kernel(config, writer):
    k_bar = read_permeability_csv(os.path.join(writer.out_dir, "k_bar.csv"))
    lams, coeffs = read_spectrum_csv(
        os.path.join(writer.out_dir, "spectrum.csv"))
    model = build_kernel_model(k_bar, lams, coeffs,
                               epsilon=config["epsilon"],
                               num_modes=min(config["modes"], lams.size))
    write_model_csv(model, writer.path("kernel.csv"))


def _stage_oracle(config, writer):
    mesh = read_mesh(os.path.join(writer.out_dir, "cell.mesh"))
    samples = solve_cell_unsteady(mesh, config["oracle_tau"],
                                  config["oracle_horizon"])
    write_samples_csv(samples, writer.path("oracle.csv"))


def _stage_macro(config, writer):
    mesh = read_mesh(os.path.join(writer.out_dir, "macro.mesh"))
    model = read_model_csv(os.path.join(writer.out_dir, "kernel.csv"))
    problem = MacroProblem(mesh, model, config["bc"], f=config["f"],
                           source=config["source"], sigma=config["sigma"],
                           tau=config["tau"])
    result = run(problem, config["t_final"], config["snapshots"])
    for t_req, state in result.snapshots:
        stamp = f"{t_req:.6g}"
        write_state_csv(writer.path(f"macro_state_{stamp}.csv"), mesh, state)
        if config["svg"]:
            render_field_svg(writer.path(f"macro_field_{stamp}.svg"), mesh,
                             state.v, title=f"pressure at t={stamp}")
    write_ledger_csv(writer.path("macro_ledger.csv"), result.ledger)


_STAGE_RUNNERS = {
    "mesh": _stage_mesh,
    "cell-steady": _stage_cell_steady,
    "eigen": _stage_eigen,
    "kernel": _stage_kernel,
    "oracle": _stage_oracle,
    "macro": _stage_macro,
}


def run_pipeline(config):
    """Execute the configured stages and write manifest.json.

    Returns the manifest dict: resolved config plus artifact hashes.
    """
    out_dir = config["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    artifacts = {}
    for stage in config["stages"]:
        for name in _STAGE_INPUTS[stage]:
            path = os.path.join(out_dir, name)
            if not os.path.exists(path):
                raise PipelineError(
                    stage, f"missing input {name} (run its stage first)")
        writer = _StageWriter(out_dir)
        try:
            _STAGE_RUNNERS[stage](config, writer)
        except Exception as exc:
            raise PipelineError(stage, str(exc)) from exc
        for name in writer.commit():
            artifacts[name] = _sha256(os.path.join(out_dir, name))
    manifest = {
        "config": _config_json(config),
        "artifacts": dict(sorted(artifacts.items())),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w",
              encoding="ascii") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return manifest


def _config_json(config):
    out = {}
    for key, value in sorted(config.items()):
        if isinstance(value, tuple):
            out[key] = list(value)
        else:
            out[key] = value
    return out


def render_table(artifacts, which):
    """Fixed-width text rendering of the summary tables.

    which selects the layout:
      "table1": artifacts["sweep"] = [(gamma, k_bar 2x2), ...]
      "table2": artifacts["columns"] = [(label, eigenvalues), ...]
      "table3": artifacts["lams"], artifacts["coeffs"]
    """
    if which == "table1":
        rows = ["{:<8}{:>14}{:>14}".format("gamma", "K11", "K12")]
        for gamma, k_bar in artifacts["sweep"]:
            k_bar = np.asarray(k_bar, dtype=float)
            rows.append("{:<8g}{:>14.8f}{:>14.8f}".format(
                gamma, k_bar[0, 0], k_bar[0, 1]))
        return "\n".join(rows) + "\n"
    if which == "table2":
        columns = artifacts["columns"]
        head = "{:<6}".format("k")
        for label, _ in columns:
            head += "{:>14}".format(label)
        rows = [head]
        depth = min(len(vals) for _, vals in columns)
        for i in range(depth):
            line = "{:<6}".format(i + 1)
            for _, vals in columns:
                line += "{:>14.5f}".format(float(vals[i]))
            rows.append(line)
        return "\n".join(rows) + "\n"
    if which == "table3":
        lams = np.asarray(artifacts["lams"], dtype=float)
        coeffs = np.asarray(artifacts["coeffs"], dtype=float)
        rows = ["{:<6}{:>14}{:>14}{:>14}".format("k", "lambda", "a1", "a2")]
        for k in range(lams.size):
            rows.append("{:<6}{:>14.6f}{:>14.6f}{:>14.6f}".format(
                k + 1, lams[k], coeffs[k, 0], coeffs[k, 1]))
        return "\n".join(rows) + "\n"
    raise ValueError(f"unknown table {which!r}")
