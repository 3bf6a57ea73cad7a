import csv
import io
import math

import numpy as np
import pytest

from oracles import SQUARE_T, css_diagonal_xi
from shapeflow.cli import line_chart_svg, main, read_config
from shapeflow.geometry import regular_polygon, rectangle, triangle, unit_square, write_polygon


def read_csv(path):
    lines = [ln for ln in open(path).read().splitlines() if not ln.startswith("#")]
    rows = list(csv.DictReader(io.StringIO("\n".join(lines))))
    return rows


def header(path):
    return [ln for ln in open(path).read().splitlines() if ln.startswith("#")]


@pytest.fixture
def square_file(tmp_path):
    p = tmp_path / "square.txt"
    write_polygon(unit_square(), p)
    return p


def test_report_square(square_file, tmp_path):
    out = tmp_path / "r.csv"
    assert main(["report", str(square_file), "--out", str(out)]) == 0
    (row,) = read_csv(out)
    assert abs(float(row["T"]) - SQUARE_T) < 1e-4
    h = header(out)
    assert h[0].startswith("# shapeflow ") and any(x.startswith("# seed: 0") for x in h)
    assert any(x.startswith("# config:") and "h=0.02" in x for x in h)


def test_report_disk(tmp_path):
    p = tmp_path / "disk.txt"
    write_polygon(regular_polygon(256), p)
    out = tmp_path / "d.csv"
    assert main(["report", str(p), "--h", "0.05", "--out", str(out)]) == 0
    assert abs(float(read_csv(out)[0]["T"]) - math.pi / 8) < 1e-3


def test_sides(tmp_path):
    p = tmp_path / "rect.txt"
    write_polygon(rectangle(2.0, 1.0), p)
    out = tmp_path / "s.csv"
    assert main(["sides", str(p), "--h", "0.04", "--out", str(out)]) == 0
    vals = {r["tag"]: float(r["mean_grad_sq"]) for r in read_csv(out)}
    assert vals["AB"] > vals["BC"]
    p2 = tmp_path / "tri.txt"
    write_polygon(triangle([(0, 0), (1.4, 0), (0.3, 0.8)]), p2)
    assert main(["sides", str(p2), "--h", "0.02", "--out", str(out)]) == 0
    v = np.array([float(r["mean_grad_sq"]) for r in read_csv(out)])
    assert np.ptp(v) <= 5e-3 * v.mean()


def test_scan_thm1_1(tmp_path):
    out, svg = tmp_path / "scan.csv", tmp_path / "scan.svg"
    args = ["scan", "thm1_1", "--t-steps", "3", "--h", "0.03", "--out", str(out), "--svg", str(svg), "--workers", "1"]
    assert main(args) == 0
    rows = read_csv(out)
    assert len(rows) == 3 and all(float(r["dTnorm_dt"]) > 0 for r in rows)
    assert all(float(r["dLnorm_dt"]) < 0 for r in rows)
    assert svg.read_text().startswith("<svg")
    assert any(x.startswith("# critical_time:") for x in header(out))


def test_scan_thm1_4(tmp_path):
    out = tmp_path / "scan.csv"
    assert main(["scan", "thm1_4", "--t-steps", "2", "--h", "0.03", "--no-fd", "--out", str(out), "--workers", "1"]) == 0
    rows = read_csv(out)
    assert all(float(r["dTnorm_dt"]) < 0 for r in rows)
    assert [float(r["t"]) for r in rows] == [1.0, 2.0]


def test_scan_hypothesis_violation(tmp_path, capsys):
    code = main(["scan", "thm1_1", "--vertices", "0,0;1,0;0.5,0.8660254037844386", "--out", str(tmp_path / "x.csv")])
    assert code == 2
    assert "HypothesisViolated" in capsys.readouterr().err


def test_flow_csf_deficit(tmp_path):
    out = tmp_path / "f.csv"
    args = ["flow", "csf", "--t-end", "0.1", "--sample-every", "800", "--record-every", "400", "--out", str(out)]
    assert main(args) == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["t", "area", "perimeter", "T", "deficit", "lemma51", "isoper", "rho_min"]
    g = [float(r["deficit"]) for r in rows if r["deficit"] != "nan"]
    assert len(g) >= 3 and all(b >= a for a, b in zip(g, g[1:]))


def test_flow_imcf_circle(tmp_path):
    out = tmp_path / "f.csv"
    args = ["flow", "imcf", "--body", "circle", "--t-end", "0.05", "--sample-every", "0", "--out", str(out)]
    assert main(args) == 0
    rows = read_csv(out)
    t = np.array([float(r["t"]) for r in rows])
    P = np.array([float(r["perimeter"]) for r in rows])
    assert np.max(np.abs(P - 2 * math.pi * np.exp(t))) <= 1e-6 * P.max()


def test_flow_torsion_disk(tmp_path):
    out = tmp_path / "f.csv"
    args = ["flow", "torsion", "--body", "circle", "--t-end", "0.002", "--sample-every", "0",
            "--record-every", "1", "--out", str(out)]
    assert main(args) == 0
    rows = read_csv(out)
    t = np.array([float(r["t"]) for r in rows])
    R2 = (np.array([float(r["perimeter"]) for r in rows]) / (2 * math.pi)) ** 2
    slope = np.polyfit(t, R2, 1)[0]
    assert abs(slope + 8) < 0.05


def test_css(tmp_path):
    out = tmp_path / "c.csv"
    assert main(["css", "--s", "0.5", "--t-steps", "2", "--h", "0.04", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert abs(float(rows[-1]["xi"]) - css_diagonal_xi(0.5)) < 1e-12
    assert float(rows[-1]["T_s_prime"]) > float(rows[-1]["T_s"])
    assert main(["css", "--s", "1", "--t-steps", "3", "--h", "0.05", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len({(r["xi"], r["T_s_prime"]) for r in rows}) == 1


def test_config_file_and_override(tmp_path, square_file):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nh = 0.05\nseed=7\n")
    out = tmp_path / "r.csv"
    assert main(["report", str(square_file), "--config", str(cfg), "--out", str(out)]) == 0
    h = header(out)
    assert "# seed: 7" in h and any("h=0.05" in x for x in h)
    assert main(["report", str(square_file), "--config", str(cfg), "--h", "0.1", "--out", str(out)]) == 0
    assert any("h=0.1" in x for x in header(out))
    assert read_config(cfg) == {"h": "0.05", "seed": "7"}
    cfg.write_text("bogus = 1\n")
    assert main(["report", str(square_file), "--config", str(cfg), "--out", str(out)]) == 3


def test_io_errors(tmp_path, square_file):
    assert main(["report", str(tmp_path / "missing.txt")]) == 3
    assert main(["report", str(square_file), "--out", str(tmp_path / "no" / "dir.csv")]) == 3
    assert main(["scan", "thm9"]) == 3


def test_plot_failure_keeps_exit_code(tmp_path):
    out = tmp_path / "c.csv"
    args = ["css", "--s", "0.9", "--t-steps", "1", "--h", "0.05", "--out", str(out), "--svg", str(tmp_path / "no" / "p.svg")]
    assert main(args) == 0


def test_byte_identical_output(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["scan", "thm1_2", "--random", "--seed", "3", "--t-steps", "2", "--h", "0.04", "--no-fd", "--workers", "1"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_svg_writer():
    svg = line_chart_svg([("a", [0, 1, 2], [1, 4, 9]), ("b", [0, 1], [float("nan"), 2])])
    assert svg.count("<polyline") == 4 and svg.rstrip().endswith("</svg>")
