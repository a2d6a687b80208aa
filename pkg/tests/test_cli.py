import hashlib
import json
import time

import numpy as np
import pytest

from streamlam.cli import main
from streamlam.errors import InvalidParam, IoError, UnknownGenerator
from streamlam.field import gen_cylinder_field, load_field
from streamlam.pipeline import PipelineConfig, StageTimer, make_field, run_pipeline


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


# gen-field -----------------------------------------------------------------------------


def test_gen_field_round_trip(tmp_path, capsys):
    out = tmp_path / "c.ffield"
    assert main(["gen-field", "cylinder", "--dims", "12,10,8", "-o", str(out)]) == 0
    text = capsys.readouterr().out
    assert "dims 12x10x8" in text and "intermediate" in text
    g = load_field(out)
    ref = gen_cylinder_field((12, 10, 8))
    assert g.dims == (12, 10, 8)
    np.testing.assert_allclose(g.frames, ref.frames, atol=1e-7)
    np.testing.assert_array_equal(g.degenerate, ref.degenerate)


def test_unknown_generator(tmp_path, capsys):
    code = main(["gen-field", "torus", "-o", str(tmp_path / "t.ffield")])
    assert code == 2
    assert "torus" in capsys.readouterr().err
    with pytest.raises(UnknownGenerator):
        make_field("torus", (4, 4, 4))


def test_usage_errors_exit_one(capsys):
    assert main([]) == 1
    assert main(["trace", "--gamma", "not-a-number"]) == 1
    assert main(["gen-field", "cylinder"]) == 1  # missing -o
    capsys.readouterr()


def test_invalid_config_is_a_data_error(tmp_path, capsys):
    code = main(["trace", "--dims", "8", "--radius", "3", "--gamma", "8", "--epsilon", "0.25",
                 "-o", str(tmp_path / "t")])
    assert code == 2
    assert "epsilon * gamma" in capsys.readouterr().err


# trace and select ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def traced(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    args = ["trace", "--generator", "cylinder", "--dims", "24", "--n-surfaces", "10", "--seed", "3"]
    assert main(args + ["-o", str(base / "a")]) == 0
    assert main(args + ["-o", str(base / "b")]) == 0
    return base


def test_trace_writes_requested_count(traced):
    manifest = json.loads((traced / "a" / "manifest.json").read_text())
    assert len(manifest["surface_ids"]) == 10
    assert len(list((traced / "a").glob("*.ply"))) == 10
    assert (traced / "a" / "mask.fmask").exists()


def test_trace_is_deterministic(traced):
    assert digest(traced / "a" / "manifest.json") == digest(traced / "b" / "manifest.json")
    for ply in sorted((traced / "a").glob("*.ply")):
        assert digest(ply) == digest(traced / "b" / ply.name)


def test_select_report(traced, tmp_path, capsys):
    out = tmp_path / "sel"
    code = main(["select", "--surfaces", str(traced / "a"), "--generator", "cylinder", "--dims", "24",
                 "--seed", "3", "-o", str(out)])
    assert code == 0
    report = json.loads((out / "selection.json").read_text())
    assert set(report) == {"n_S", "n_p", "relaxed_objective", "binary_objective", "fixed_fraction",
                           "selected_ids"}
    assert report["relaxed_objective"] <= report["binary_objective"] + 1e-6
    ids = json.loads((traced / "a" / "manifest.json").read_text())["surface_ids"]
    assert set(report["selected_ids"]) <= set(ids)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["surface_ids"] == sorted(report["selected_ids"])
    assert manifest["r_fine"] == 1.0
    assert "Subselection" in capsys.readouterr().out


def test_missing_input_names_the_stage(tmp_path, capsys):
    code = main(["select", "--surfaces", str(tmp_path / "nowhere"), "--dims", "8", "-o", str(tmp_path / "o")])
    assert code == 2
    assert "[field]" in capsys.readouterr().err
    code = main(["trace", "--field", str(tmp_path / "missing.ffield"), "-o", str(tmp_path / "o")])
    assert code == 2
    assert "[field]" in capsys.readouterr().err


def test_stage_timer_tags_errors():
    timer = StageTimer()
    with pytest.raises(IoError) as info:
        with timer("solid"):
            open("/nonexistent/dir/file")
    assert info.value.stage == "solid"
    assert str(info.value).startswith("[solid]")
    assert "solid" in timer.times


# whole pipeline ----------------------------------------------------------------------------


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("pipe")
    t = time.perf_counter()
    code = main(["pipeline", "--generator", "cylinder", "--dims", "32", "--n-surfaces", "30",
                 "--seed", "1", "-o", str(out)])
    return out, code, time.perf_counter() - t


def test_pipeline_32_cubed(pipeline_run):
    out, code, wall = pipeline_run
    assert code == 0
    assert wall < 600
    for name in ("mask.fmask", "selection.json", "solid.vvol", "solid.obj", "hex.vtk", "hex.mesh",
                 "quality.json", "timings.json", "candidates/manifest.json", "selected/manifest.json"):
        assert (out / name).exists(), name
    q = json.loads((out / "quality.json").read_text())
    assert q["cells"] > 0 and q["min_scaled_jacobian"] > 0


def test_pipeline_stage_timings_cover_wall_clock(pipeline_run):
    out, _, _ = pipeline_run
    t = json.loads((out / "timings.json").read_text())
    assert set(t["stages"]) == {"field", "mask", "trace", "select", "supersample", "solid", "hex"}
    assert abs(t["summed"] - t["wall"]) <= 0.1 * t["wall"]


def test_config_file_and_flag_override(tmp_path):
    cfg = {"generator": "singularity2d", "dims": [20, 20, 4], "gamma": 6.0, "epsilon": 0.3, "r": 1.5,
           "r_fine": 0.75, "n_surfaces": 4, "outputs": ["solid"], "seed": 9}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "run"
    assert main(["pipeline", "--config", str(path), "--n-surfaces", "5", "-o", str(out)]) == 0
    report = json.loads((out / "selection.json").read_text())
    assert report["n_S"] == 5
    assert (out / "solid.obj").exists() and not (out / "hex.vtk").exists()


def test_config_rejects_unknown_keys(tmp_path):
    with pytest.raises(InvalidParam):
        PipelineConfig.from_dict({"gama": 3})
    with pytest.raises(InvalidParam):
        PipelineConfig(r=1.0, r_fine=1.0).validate()


def test_run_pipeline_api_returns_results(tmp_path):
    cfg = PipelineConfig(generator="singularity2d", dims=(20, 20, 4), gamma=6.0, epsilon=0.3, r=1.5,
                         r_fine=0.75, n_surfaces=4, outputs=("solid",), output=str(tmp_path / "r"))
    res = run_pipeline(cfg, echo=None)
    assert res["volume"].values.max() <= 1.0
    assert len(res["selected"]) == len(res["selection"]["selected_ids"])
