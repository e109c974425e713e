import json
import sys
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient

from carimirror.cli import main as cli_main
from carimirror.config import load_config, parse_config
from carimirror.errors import ConfigError
from carimirror.service import create_app

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "scripts"))
import make_toy_bundle  # noqa: E402

SMALL = {
    "seed": 7,
    "synth": {"resolution": (18, 20), "n_views": 4, "image_size": 192, "focal": 230.0,
              "max_yaw_deg": 22.0, "n_frames": 12, "atlas_size": 64,
              "corpus_identities": 3, "corpus_expressions": 3},
    "static": {"focal": 230.0, "outer_iters": 6, "atlas_size": 64},
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("pipeline")


@pytest.fixture(scope="module")
def small_bundle(workdir):
    out = workdir / "toy_small.cmw"
    make_toy_bundle.build(out, resolution=(18, 20))
    return out


class TestConfig:
    def test_defaults_match_published_operating_point(self):
        cfg = parse_config({})
        assert cfg.track.mu_flow == 1.0
        assert cfg.track.mu_spa == 10.0
        assert cfg.track.mu_sm == 0.001
        assert cfg.translate.mu_smo == 0.001
        assert cfg.texture.data_weight == 1.2
        assert cfg.static.lambda_reg == 0.1

    def test_unknown_key_rejected_by_name(self):
        with pytest.raises(ConfigError) as ei:
            parse_config({"track": {"mu_flow": 1.0, "mu_flo": 2.0}})
        assert "mu_flo" in str(ei.value)

    def test_wrong_schema_version_rejected(self):
        with pytest.raises(ConfigError):
            parse_config({"schema_version": 99})

    def test_load_config_file(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"seed": 5}))
        assert load_config(p).seed == 5


class TestService:
    def test_health(self):
        client = TestClient(create_app())
        resp = client.get("/v1/health")
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "ok"
        assert set(body["commands"]) == {"synth", "static", "texture", "track",
                                         "translate", "render"}

    def test_malformed_config_names_key(self, tmp_path):
        client = TestClient(create_app())
        resp = client.post("/v1/synth", json={
            "config": {"synth": {"n_viewz": 3}}, "out_dir": str(tmp_path / "x")})
        assert resp.status_code == 422
        assert "n_viewz" in json.dumps(resp.json())

    def test_missing_required_path_names_key(self, tmp_path):
        client = TestClient(create_app())
        resp = client.post("/v1/static", json={"config": {}, "out_dir": str(tmp_path / "x")})
        assert resp.status_code == 422
        assert "capture_dir" in json.dumps(resp.json())


@pytest.fixture(scope="module")
def synth_out(workdir):
    rc = cli_main(["synth", "--config", _write_cfg(workdir, SMALL), "--out",
                   str(workdir / "synth")])
    assert rc == 0
    return workdir / "synth"


def _write_cfg(workdir, extra):
    payload = json.loads(json.dumps(extra))
    path = workdir / f"cfg_{abs(hash(json.dumps(extra, sort_keys=True, default=str))) % 10**8}.json"
    path.write_text(json.dumps(payload, default=list))
    return str(path)


class TestEndToEnd:
    def test_synth_populates_fixture_tree(self, synth_out):
        assert (synth_out / "manifest.json").exists()
        assert len(list((synth_out / "capture").glob("view_*.png"))) == 4
        assert len(list((synth_out / "frames").glob("frame_*.png"))) == 12
        corpus = json.loads((synth_out / "corpus" / "manifest.json").read_text())
        assert len(corpus["domains"]["regular"]["meshes"]) == 9
        assert len(corpus["domains"]["caricature"]["meshes"]) == 9

    def test_full_pipeline_smoke(self, workdir, synth_out, small_bundle):
        cfg = dict(SMALL)
        cfg["paths"] = {"capture_dir": str(synth_out / "capture")}
        rc = cli_main(["static", "--config", _write_cfg(workdir, cfg), "--out",
                       str(workdir / "static")])
        assert rc == 0
        assert (workdir / "static" / "rig" / "shapes" / "shape_46.obj").exists()
        assert (workdir / "static" / "rig" / "pointcloud.ply").exists()

        cfg["paths"] = {"stylized_dir": str(synth_out / "stylized"),
                        "rig_dir": str(workdir / "static" / "rig")}
        rc = cli_main(["texture", "--config", _write_cfg(workdir, cfg), "--out",
                       str(workdir / "texture")])
        assert rc == 0
        assert (workdir / "texture" / "texture" / "atlas.png").exists()
        assert (workdir / "texture" / "texture" / "labels.png").exists()

        cfg["paths"] = {"frames_dir": str(synth_out / "frames"),
                        "rig_dir": str(workdir / "static" / "rig")}
        rc = cli_main(["track", "--config", _write_cfg(workdir, cfg), "--out",
                       str(workdir / "track")])
        assert rc == 0
        records = json.loads((workdir / "track" / "track" / "track.json").read_text())
        assert len(records) == 12
        assert all(len(r["w"]) == 46 for r in records)

        cfg["paths"] = {"track_file": str(workdir / "track" / "track" / "track.json"),
                        "rig_dir": str(workdir / "static" / "rig"),
                        "bundle_file": str(small_bundle)}
        rc = cli_main(["translate", "--config", _write_cfg(workdir, cfg), "--out",
                       str(workdir / "translate")])
        assert rc == 0
        objs = sorted((workdir / "translate" / "caricature").glob("frame_*.obj"))
        assert len(objs) == 12

        cfg["paths"] = {"meshes_dir": str(workdir / "translate" / "caricature"),
                        "atlas_file": str(workdir / "texture" / "texture" / "atlas.png")}
        rc = cli_main(["render", "--config", _write_cfg(workdir, cfg), "--out",
                       str(workdir / "render")])
        assert rc == 0
        assert len(list((workdir / "render" / "caricature").glob("preview_*.png"))) > 0

    def test_track_quality_against_synth_truth(self, workdir, synth_out):
        truth = json.loads((synth_out / "frames" / "truth.json").read_text())
        records = json.loads((workdir / "track" / "track" / "track.json").read_text())
        w_true = np.array(truth["weights"])
        w_got = np.array([r["w"] for r in records])
        rmse = np.sqrt(((w_got - w_true) ** 2).mean())
        assert rmse < 0.05, f"pipeline tracking w RMSE {rmse}"

    def test_rerun_is_byte_identical(self, workdir, synth_out, small_bundle):
        cfg = dict(SMALL)
        cfg["paths"] = {"frames_dir": str(synth_out / "frames"),
                        "rig_dir": str(workdir / "static" / "rig")}
        rc = cli_main(["track", "--config", _write_cfg(workdir, cfg), "--out",
                       str(workdir / "track2")])
        assert rc == 0
        a = (workdir / "track" / "track" / "track.json").read_bytes()
        b = (workdir / "track2" / "track" / "track.json").read_bytes()
        assert a == b
        cfg["paths"] = {"track_file": str(workdir / "track2" / "track" / "track.json"),
                        "rig_dir": str(workdir / "static" / "rig"),
                        "bundle_file": str(small_bundle)}
        rc = cli_main(["translate", "--config", _write_cfg(workdir, cfg), "--out",
                       str(workdir / "translate2")])
        assert rc == 0
        for k in range(12):
            a = (workdir / "translate" / "caricature" / f"frame_{k:03d}.obj").read_bytes()
            b = (workdir / "translate2" / "caricature" / f"frame_{k:03d}.obj").read_bytes()
            assert a == b

    def test_cli_malformed_config_exits_nonzero(self, workdir, capsys):
        bad = workdir / "bad.json"
        bad.write_text(json.dumps({"track": {"mu_spaz": 1}}))
        rc = cli_main(["track", "--config", str(bad), "--out", str(workdir / "x")])
        assert rc == 2
        err = capsys.readouterr().err
        assert "mu_spaz" in err
