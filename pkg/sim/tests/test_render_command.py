# sim/tests/test_render_command.py
import io

from graspforge.cli import EXIT_OK, EXIT_USAGE, main


def _run(argv):
    out, err = io.StringIO(), io.StringIO()
    return main(argv, stdout=out, stderr=err), out.getvalue(), err.getvalue()


def test_render_writes_obj_and_depth(tmp_path):
    obj = tmp_path / "box.obj"
    pgm = tmp_path / "box.pgm"
    code, out, err = _run(["render", "--phi", "0.03,0.03,0.05,0.3,0.3", "--out", str(obj),
                           "--n-eta", "8", "--n-omega", "8", "--depth-pgm", str(pgm)])
    assert code == EXIT_OK, err
    lines = obj.read_text().splitlines()
    assert lines[1] == "# phi 0.03 0.03 0.05 0.3 0.3"
    assert any(line.startswith("v ") for line in lines)
    assert any(line.startswith("f ") for line in lines)
    assert pgm.read_bytes().startswith(b"P5\n32 32\n65535\n")
    assert (tmp_path / "run.json").is_file()
    assert "Wrote" in out


def test_render_sweep(tmp_path):
    code, out, err = _run(["render", "--phi", "0.03,0.03,0.05,1,1", "--out", str(tmp_path / "sweep"),
                           "--sweep", "--n-eta", "8", "--n-omega", "8"])
    assert code == EXIT_OK, err
    objs = sorted(p.name for p in (tmp_path / "sweep").glob("*.obj"))
    assert len(objs) >= 3
    assert (tmp_path / "sweep" / "sweep_cross_sections.png").read_bytes()[:4] == b"\x89PNG"
    assert "corner=" in out


def test_render_rejects_bad_input(tmp_path):
    for phi in ("0.03,0.03,0.05", "a,b,c,d,e"):
        code, _, err = _run(["render", "--phi", phi, "--out", str(tmp_path / "x.obj")])
        assert code == EXIT_USAGE
        assert "--phi" in err
    code, _, _ = _run(["render", "--phi", "0.03,0.03,0.05,1,1", "--out", str(tmp_path / "x.obj"),
                       "--n-eta", "2"])
    assert code == EXIT_USAGE
