import subprocess
import sys

import reportplots
from reportplots import figures


def test_envelope_reference_matches_csv():
    rows, constants = reportplots.load_envelope_table()
    ref = reportplots.envelope_reference(rows, constants)
    for i, row in enumerate(rows):
        for col in ("concentration", "height", "mass"):
            assert abs(ref[col][i] - row["bound_" + col]) <= 1e-9


def test_make_all_four_kinds(tmp_path):
    paths = figures.make_all(outdir=str(tmp_path))
    assert len(paths) == 4
    names = {p.rsplit("/", 1)[-1] for p in paths}
    assert names == {"norm_decay.png", "envelopes.png", "corona_slope.png",
                     "viscosity_sweep.png"}
    for p in paths:
        assert tmp_path.joinpath(p.rsplit("/", 1)[-1]).stat().st_size > 0


def test_cli_entry(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "reportplots", "--outdir", str(tmp_path)],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert len(list(tmp_path.glob("*.png"))) == 4


def test_external_csv_paths(tmp_path):
    # same figures from explicit paths, as after a fresh carnot-flow run
    out = figures.envelopes(csv_path=reportplots.data_path("envelopes.csv"),
                            constants_path=reportplots.data_path(
                                "constants.json"),
                            outdir=str(tmp_path))
    assert out.endswith("envelopes.png")
