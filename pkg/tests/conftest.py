"""Shared fixtures.

The expensive pipeline runs are session-scoped so several tests can
audit one artifact set instead of recomputing it.
"""
from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from koopdict.config import parse_config_dict
from koopdict.pipeline import execute

REPO = Path(__file__).resolve().parent.parent
CONFIG_DIR = REPO / "configs"


def run_cli(*args: str, cwd: Path | None = None) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "koopdict.cli", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
    )


def load_default_config(name: str) -> dict:
    return json.loads((CONFIG_DIR / name).read_text())


def desk_vdp_dict(out_dir: Path, observable: str = "gauss3", epochs: int = 250) -> dict:
    """The default Van der Pol experiment with training shortened enough
    for repeated in-suite runs."""
    cfg = load_default_config("default_vdp.json")
    cfg["autoencoder"]["train"]["epochs"] = epochs
    cfg["observable"] = observable
    cfg["output_dir"] = str(out_dir)
    return cfg


@pytest.fixture(scope="session")
def desk_vdp_result(tmp_path_factory):
    """One desk-scale VdP pipeline run (gauss3), shared across tests."""
    out = tmp_path_factory.mktemp("desk_vdp")
    cfg = parse_config_dict(desk_vdp_dict(out))
    return execute(cfg)


@pytest.fixture(scope="session")
def default_vdp_runs(tmp_path_factory):
    """Two full CLI runs of the shipped default VdP config, same seed."""
    base = tmp_path_factory.mktemp("default_vdp_cli")
    dirs = []
    for tag in ("a", "b"):
        out = base / tag
        proc = run_cli(
            "run",
            "--config",
            str(CONFIG_DIR / "default_vdp.json"),
            "--seed",
            "42",
            "--out",
            str(out),
        )
        assert proc.returncode == 0, proc.stderr
        dirs.append(out)
    return dirs


@pytest.fixture(scope="session")
def rd_quarter_result(tmp_path_factory):
    """The reaction-diffusion pipeline at width_scale 0.25."""
    out = tmp_path_factory.mktemp("rd_quarter")
    cfg = load_default_config("default_rd.json")
    cfg["width_scale"] = 0.25
    cfg["output_dir"] = str(out)
    return execute(parse_config_dict(cfg))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
