"""Service endpoints exercised over the in-process test client."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from cbmv.confidence import load_feature_volume
from cbmv.fileio import load_cost_volume, read_pfm
from cbmv.service.app import create_app

SMALL_CONFIG = {
    "d_max": "8", "seed": "3",
    "matcher.census_window": "5", "matcher.zsad_window": "3",
    "matcher.ncc_window": "3", "matcher.sobel_window": "3",
    "forest.n_trees": "4", "forest.max_depth": "8",
    "forest.min_samples_leaf": "5",
    "cbca.l_max": "4", "post.bilateral_spatial_sigma": "0.5",
}


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


@pytest.fixture(scope="module")
def pair(client, tmp_path_factory):
    root = tmp_path_factory.mktemp("svc")
    r = client.post("/synth", json={
        "out_dir": str(root), "prefix": "p", "width": 48, "height": 32,
        "d_max": 8, "rects": [
            {"x0": 16, "y0": 8, "width": 20, "height": 16, "disparity": 5}],
        "seed": 1,
    })
    assert r.status_code == 200
    return root, r.json()


def test_healthz(client):
    r = client.get("/healthz")
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "ok" and "version" in body


def test_synth_writes_all_artifacts(pair):
    root, body = pair
    for key in ("left", "right", "gt", "occlusion"):
        assert (root / f"p_{'occ' if key == 'occlusion' else key}.png").exists() \
            or body[key].endswith(".pfm")
    gt = read_pfm(body["gt"])
    assert gt.shape == (32, 48)
    assert set(np.unique(gt)) == {0.0, 5.0}


def test_synth_validation_maps_to_422(client, tmp_path):
    r = client.post("/synth", json={"out_dir": str(tmp_path), "width": 0})
    assert r.status_code == 422
    body = r.json()
    assert body["kind"] == "config" and "detail" in body


def test_full_flow(client, pair, tmp_path_factory):
    root, body = pair
    out = tmp_path_factory.mktemp("out")
    model_path = str(out / "model.txt")
    r = client.post("/train", json={
        "pairs": [{"left": body["left"], "right": body["right"], "gt": body["gt"]}],
        "model_out": model_path,
        "config": SMALL_CONFIG,
    })
    assert r.status_code == 200
    train_body = r.json()
    assert train_body["model_path"] == model_path
    summary = train_body["summary"]
    assert summary["n_pairs"] == 1 and summary["training_accuracy"] > 0.5

    r = client.post("/predict", json={
        "left": body["left"], "right": body["right"], "model": model_path,
        "out_prefix": str(out / "disp"),
        "config": SMALL_CONFIG,
        "dump_cbmv": str(out / "cbmv.bin"),
        "dump_stages": str(out / "stages"),
    })
    assert r.status_code == 200
    pred_body = r.json()
    disp = read_pfm(pred_body["pfm"])
    assert disp.shape == (32, 48)
    vol = load_cost_volume(pred_body["cbmv_dump"])
    assert vol.d_max == 8
    assert (out / "stages" / "wta_left.pfm").exists()
    assert (out / "stages" / "final.pfm").exists()

    r = client.post("/eval", json={
        "pred": pred_body["pfm"], "gt": body["gt"], "mask": body["occlusion"],
    })
    assert r.status_code == 200
    ev = r.json()
    assert ev["mask_kind"] == "nonocc"
    assert ev["bad"]["1"] < 0.25
    assert "[eval]" in ev["block"]

    r = client.post("/eval", json={"pred": pred_body["pfm"], "gt": body["gt"]})
    assert r.json()["mask_kind"] == "all"


def test_predict_rejects_bad_config(client, pair, tmp_path):
    root, body = pair
    r = client.post("/predict", json={
        "left": body["left"], "right": body["right"],
        "model": str(tmp_path / "never-written.txt"),
        "out_prefix": str(tmp_path / "d"),
        "config": {"sgm.p9": "1"},
    })
    assert r.status_code == 422
    assert r.json()["kind"] == "config"


def test_missing_files_map_to_400(client, tmp_path):
    r = client.post("/eval", json={
        "pred": str(tmp_path / "a.pfm"), "gt": str(tmp_path / "b.pfm"),
    })
    assert r.status_code == 400
    assert r.json()["kind"] == "data"

    r = client.post("/eval", json={
        "pred": str(tmp_path / "a.tiff"), "gt": str(tmp_path / "b.pfm"),
    })
    assert r.status_code == 400  # unsupported extension


def test_features_endpoint(client, pair, tmp_path):
    root, body = pair
    out = str(tmp_path / "fv.bin")
    r = client.post("/features", json={
        "left": body["left"], "right": body["right"], "out": out,
        "config": SMALL_CONFIG,
    })
    assert r.status_code == 200
    info = r.json()
    assert (info["height"], info["width"], info["d_max"]) == (32, 48, 8)
    fv = load_feature_volume(out)
    assert fv.features.shape == (32, 48, 9, 20)
