import json

import numpy as np
import pytest

from adelim import experiments, tcl
from adelim.experiments import default_config
from adelim.report import emit


def test_emit_all_artifacts(tmp_path):
    rep = experiments.run_prop_verify(default_config("prop-verify"))
    paths = emit(rep, str(tmp_path / "out"), fmt="csv", figures=True)
    assert paths["figure"] is not None
    doc = json.loads(open(paths["report"]).read())
    assert doc["figure"] == "prop-verify.png"
    assert sorted(doc["series_files"]) == sorted(
        ["series_dP_norm.csv", "series_J_norm.csv"])
    body = open(paths["series"][0]).read().splitlines()
    assert body[0] == "t,value"
    assert len(body) == len(rep.series[list(rep.series)[0]][0]) + 1


def test_emit_loglog_figure(tmp_path):
    cfg = default_config("laplace-compare")
    cfg.sweep = [0.04, 0.08]
    rep = experiments.run_laplace_compare(cfg)
    paths = emit(rep, str(tmp_path / "out"), figures=True)
    assert paths["figure"].endswith("laplace-compare.png")


def test_emit_choi_figure(tmp_path):
    cfg = default_config("choi")
    cfg.grid = {"t_max": 0.2, "dt": 1e-3}
    rep = experiments.run_choi(cfg)
    paths = emit(rep, str(tmp_path / "out"), figures=True)
    assert paths["figure"].endswith("choi.png")


def test_reports_deterministic():
    cfg = default_config("prop-verify")
    rep1 = experiments.run_prop_verify(cfg)
    rep2 = experiments.run_prop_verify(default_config("prop-verify"))
    for key in rep1.scalars:
        assert rep1.scalars[key] == rep2.scalars[key]


def test_evolve_reduced_time_dependent_generator():
    # x' = -t x has the Gaussian solution exp(-t^2/2)
    F = lambda t: np.array([[-t]], dtype=complex)  # noqa: E731
    grid = np.linspace(0.0, 2.0, 21)
    out = tcl.evolve_reduced(F, np.array([1.0]), grid, dt=1e-3)
    want = np.exp(-grid ** 2 / 2.0)
    assert np.max(np.abs(out[:, 0] - want)) < 1e-9
