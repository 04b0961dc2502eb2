"""Rendering checks against the checked-in golden tables."""
import json
from pathlib import Path

import pytest

from plotgen import FigureSpec, SchemaError, build_figure
from plotgen.cli import main

GOLDEN = Path(__file__).parent / "golden"
KINDS = {
    "cooling": "cooling_set2.csv",
    "fock": "fock_ladder.csv",
    "ghz": "ghz_lossless.csv",
    "wigner": "wigner_fock1.csv",
}


@pytest.mark.parametrize("kind", sorted(KINDS))
def test_every_kind_renders(kind, tmp_path):
    out = tmp_path / f"{kind}.png"
    code = main([kind, "--in", str(GOLDEN / KINDS[kind]), "--out", str(out)])
    assert code == 0
    assert out.stat().st_size > 1000
    sidecar = json.loads((tmp_path / f"{kind}.png.json").read_text())
    assert sidecar["kind"] == kind
    assert sidecar["source"] == KINDS[kind]


def test_wigner_limits_symmetric_and_negativity_recorded(tmp_path):
    out = tmp_path / "w.png"
    assert main(["wigner", "--in", str(GOLDEN / KINDS["wigner"]),
                 "--out", str(out)]) == 0
    doc = json.loads((tmp_path / "w.png.json").read_text())
    # the golden map is a |1> state: negative at the origin
    assert doc["data_min"] < 0.0
    assert doc["vmin"] == -doc["vmax"]
    assert doc["vmax"] >= max(abs(doc["data_min"]), abs(doc["data_max"]))


def test_ghz_figure_carries_both_series():
    spec = FigureSpec(kind="ghz", source=str(GOLDEN / KINDS["ghz"]),
                      out="unused.png")
    fig, stats = build_figure(spec)
    try:
        labels = stats["series"]
        assert "simulation" in labels
        assert "coherent-overlap theory" in labels
        legend_texts = [t.get_text()
                        for t in fig.axes[0].get_legend().get_texts()]
        assert set(labels) <= set(legend_texts)
    finally:
        import matplotlib.pyplot as plt
        plt.close(fig)


def test_schema_mismatch_reports_header_diff(tmp_path, capsys):
    out = tmp_path / "x.png"
    code = main(["cooling", "--in", str(GOLDEN / KINDS["ghz"]),
                 "--out", str(out)])
    assert code == 2
    err = capsys.readouterr().err
    assert "expected: delta_rad_s" in err
    assert "found:    N_p" in err
    assert not out.exists()


def test_missing_input_exits_2(tmp_path, capsys):
    code = main(["fock", "--in", str(tmp_path / "absent.csv"),
                 "--out", str(tmp_path / "y.png")])
    assert code == 2
    assert "not found" in capsys.readouterr().err


def test_empty_table_rejected(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert main(["ghz", "--in", str(empty),
                 "--out", str(tmp_path / "z.png")]) == 2
    assert "no header" in capsys.readouterr().err


def test_rerender_is_byte_identical(tmp_path):
    blobs = []
    for name in ("first.png", "second.png"):
        out = tmp_path / name
        assert main(["cooling", "--in", str(GOLDEN / KINDS["cooling"]),
                     "--out", str(out)]) == 0
        blobs.append(out.read_bytes())
    assert blobs[0] == blobs[1]


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(SchemaError):
        FigureSpec(kind="scatter", source=str(GOLDEN / KINDS["ghz"]),
                   out=str(tmp_path / "n.png"))
