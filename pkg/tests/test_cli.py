import json
import os

import numpy as np
import pytest

from tetcorr import io as tio
from tetcorr.cli import main
from tetcorr.synthetic import box_mesh

FAST_FLAGS = ["--max-outer", "2", "--beta-ramp", "1"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Tiny mesh pair on disk plus one solved map's artifacts."""
    root = tmp_path_factory.mktemp("cli")
    src = box_mesh(2, 2, 2)
    dst = box_mesh(2, 2, 2, size=(1.2, 0.9, 1.0))
    paths = {
        "root": root,
        "source": str(root / "source.mesh"),
        "target": str(root / "target.mesh"),
        "out": str(root / "out"),
    }
    tio.write_mesh(src, paths["source"])
    tio.write_mesh(dst, paths["target"])
    code = main(["map", "--source", paths["source"], "--target",
                 paths["target"], "--out-dir", paths["out"], *FAST_FLAGS])
    assert code == 0
    return paths


ARTIFACTS = ["p12.txt", "p21.txt", "x12.txt", "x21.txt", "report.json",
             "timing.json", "distortion_12.csv", "distortion_21.csv"]


def test_map_writes_artifacts(workdir):
    names = sorted(os.listdir(workdir["out"]))
    assert names == sorted(ARTIFACTS)
    with open(os.path.join(workdir["out"], "report.json")) as fh:
        report = json.load(fh)
    assert {"history", "stage_markers", "final", "config"} <= set(report)
    assert report["config"]["max_outer_iters"] == 2
    x12 = tio.read_point_table(os.path.join(workdir["out"], "x12.txt"))
    assert x12.shape == (27, 3)
    with open(os.path.join(workdir["out"], "distortion_12.csv")) as fh:
        header = fh.readline().strip()
    assert header == "tet_id,distortion,det_j_hat"
    with open(os.path.join(workdir["out"], "timing.json")) as fh:
        timing = json.load(fh)
    assert timing["wall_time_s"] > 0


def test_map_rerun_is_byte_identical(workdir):
    out2 = str(workdir["root"] / "out2")
    code = main(["map", "--source", workdir["source"], "--target",
                 workdir["target"], "--out-dir", out2, *FAST_FLAGS])
    assert code == 0
    for name in ARTIFACTS:
        if name == "timing.json":
            continue  # the only artifact allowed to differ between reruns
        with open(os.path.join(workdir["out"], name), "rb") as fh:
            first = fh.read()
        with open(os.path.join(out2, name), "rb") as fh:
            second = fh.read()
        assert first == second, name


def test_map_with_landmarks(workdir):
    lm_path = str(workdir["root"] / "landmarks.txt")
    pairs = [
        (("tet", 0, np.array([1.0, 0, 0, 0])), ("tet", 0, np.array([1.0, 0, 0, 0]))),
        (("tet", 47, np.array([0, 1.0, 0, 0])), ("tet", 47, np.array([0, 1.0, 0, 0]))),
    ]
    tio.write_landmarks(pairs, lm_path)
    out = str(workdir["root"] / "out_lm")
    code = main(["map", "--source", workdir["source"], "--target",
                 workdir["target"], "--landmarks", lm_path,
                 "--out-dir", out, *FAST_FLAGS])
    assert code == 0
    assert os.path.exists(os.path.join(out, "report.json"))


def test_map_config_file_and_flag_precedence(workdir):
    cfg = str(workdir["root"] / "solver.cfg")
    with open(cfg, "w") as fh:
        fh.write("# solver settings\nalpha = 0.3\ngamma = 10.0\nenergy = sarap\n")
    out = str(workdir["root"] / "out_cfg")
    code = main(["map", "--source", workdir["source"], "--target",
                 workdir["target"], "--config", cfg, "--alpha", "0.25",
                 "--out-dir", out, *FAST_FLAGS])
    assert code == 0
    with open(os.path.join(out, "report.json")) as fh:
        config = json.load(fh)["config"]
    assert config["alpha"] == 0.25  # flag wins over file
    assert config["gamma"] == 10.0  # file wins over default
    assert config["energy"] == "arap"  # alias resolved


def test_usage_errors_exit_1(workdir, tmp_path, capsys):
    bad_cfg = tmp_path / "bad.cfg"
    bad_cfg.write_text("volume = 3\n")
    cases = [
        [],
        ["frobnicate"],
        ["map", "--source", "missing.mesh", "--target", workdir["target"],
         "--out-dir", str(tmp_path / "o")],
        ["map", "--source", workdir["source"], "--target", workdir["target"],
         "--alpha", "1.5", "--out-dir", str(tmp_path / "o")],
        ["map", "--source", workdir["source"], "--target", workdir["target"],
         "--config", str(bad_cfg), "--out-dir", str(tmp_path / "o")],
        ["analyze-energies"],
        ["metrics", "--source", workdir["source"], "--target",
         workdir["target"], "--x12", "missing.txt", "--out",
         str(tmp_path / "m.json")],
        ["push-forward", "--source", workdir["source"],
         "--x12", os.path.join(workdir["out"], "x12.txt"),
         "--out", str(tmp_path / "g.txt")],  # neither --geometry nor --field
    ]
    for argv in cases:
        assert main(argv) == 1, argv
        assert "error:" in capsys.readouterr().err


def test_solver_failure_exits_2(workdir, tmp_path, monkeypatch, capsys):
    import tetcorr.cli as cli

    def boom(*a, **k):
        raise RuntimeError("synthetic failure")

    monkeypatch.setattr(cli, "solve", boom)
    code = main(["map", "--source", workdir["source"], "--target",
                 workdir["target"], "--out-dir", str(tmp_path / "o")])
    assert code == 2
    assert "solver error" in capsys.readouterr().err


def test_metrics_full_pair(workdir, tmp_path):
    out = str(tmp_path / "metrics.json")
    d = workdir["out"]
    code = main(["metrics", "--source", workdir["source"], "--target",
                 workdir["target"],
                 "--x12", os.path.join(d, "x12.txt"),
                 "--x21", os.path.join(d, "x21.txt"),
                 "--p12", os.path.join(d, "p12.txt"),
                 "--p21", os.path.join(d, "p21.txt"),
                 "--out", out])
    assert code == 0
    with open(out) as fh:
        payload = json.load(fh)
    assert {"breakdown", "d12", "d21"} <= set(payload)
    assert payload["d12"]["e_arap"] is not None
    assert payload["breakdown"]["total"] >= 0.0
    # the stored energy terms agree with the solver's final report
    with open(os.path.join(d, "report.json")) as fh:
        final_bd = json.load(fh)["final"]["breakdown"]
    assert abs(payload["breakdown"]["e_arap"] - final_bd["e_arap"]) < 1e-9


def test_metrics_single_direction(workdir, tmp_path):
    out = str(tmp_path / "metrics_one.json")
    code = main(["metrics", "--source", workdir["source"], "--target",
                 workdir["target"],
                 "--x12", os.path.join(workdir["out"], "x12.txt"),
                 "--out", out])
    assert code == 0
    with open(out) as fh:
        payload = json.load(fh)
    assert "d21" not in payload and "breakdown" not in payload
    assert payload["d12"]["e_arap"] is None
    assert payload["d12"]["d_avg_hat"] >= 0.0


def test_push_forward_points_obj(workdir, tmp_path, capsys):
    geom = tmp_path / "probe.obj"
    inner = 0.25 + 0.5 * np.random.default_rng(2).uniform(size=(5, 3))
    with open(geom, "w") as fh:
        for p in inner:
            fh.write(f"v {p[0]} {p[1]} {p[2]}\n")
    out = str(tmp_path / "mapped.obj")
    code = main(["push-forward", "--source", workdir["source"],
                 "--x12", os.path.join(workdir["out"], "x12.txt"),
                 "--geometry", str(geom), "--out", out])
    assert code == 0
    verts, lines, faces = tio.read_obj(out)
    assert verts.shape == (5, 3) and len(lines) == 0 and len(faces) == 0
    # outputs live in the x table's frame: interior images stay within the
    # deformed source's extent
    x12 = tio.read_point_table(os.path.join(workdir["out"], "x12.txt"))
    assert np.all(verts >= x12.min(axis=0) - 1e-9)
    assert np.all(verts <= x12.max(axis=0) + 1e-9)


def test_push_forward_field_pull_back(workdir, tmp_path):
    dst = box_mesh(2, 2, 2, size=(1.2, 0.9, 1.0))
    field = tmp_path / "field.csv"
    values = np.arange(dst.n_vertices, dtype=np.float64)
    with open(field, "w") as fh:
        fh.write("value\n")
        fh.writelines(f"{v}\n" for v in values)
    out = str(tmp_path / "pulled.csv")
    code = main(["push-forward", "--source", workdir["source"],
                 "--x12", os.path.join(workdir["out"], "x12.txt"),
                 "--field", str(field),
                 "--p12", os.path.join(workdir["out"], "p12.txt"),
                 "--target", workdir["target"], "--out", out])
    assert code == 0
    pulled = np.loadtxt(out, delimiter=",")
    assert pulled.shape == (27,)
    assert np.all(pulled >= values.min()) and np.all(pulled <= values.max())


def test_push_forward_row_mismatch(workdir, tmp_path, capsys):
    stub = tmp_path / "short.txt"
    tio.write_point_table(np.zeros((3, 3)), str(stub))
    code = main(["push-forward", "--source", workdir["source"],
                 "--x12", str(stub), "--geometry", workdir["source"],
                 "--out", str(tmp_path / "o.txt")])
    assert code == 1
    assert "rows" in capsys.readouterr().err
