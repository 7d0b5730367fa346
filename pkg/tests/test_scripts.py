import runpy
import sys
from pathlib import Path

import pytest

SCRIPTS = Path(__file__).resolve().parents[1] / "scripts"


@pytest.mark.parametrize("name, argv", [
    ("convergence_study.py", ["--final-time", "0.5"]),
    ("singular_example.py", ["--f", "x^2"]),
    ("energy_behaviour.py", ["--steps", "20"]),
])
def test_script_runs(name, argv, monkeypatch, capsys, tmp_path):
    monkeypatch.setattr(sys, "argv", [name, *argv])
    runpy.run_path(str(SCRIPTS / name), run_name="__main__")
    assert capsys.readouterr().out or capsys.readouterr().err is not None
