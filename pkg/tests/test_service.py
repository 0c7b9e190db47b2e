import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from balloonseg.initialization import ContourInit, process_contour
from balloonseg.inflation import segment
from balloonseg.phantom import PhantomSpec, generate_phantom
from balloonseg.service import create_app, mask_slice_runs, window_slice
from balloonseg.volume import Mask3D, extract_slice, load_volume, save_mask, save_volume

SPEC = PhantomSpec(dims=(64, 64, 64), center_vox=(32, 32, 32), radii_mm=(10, 10, 10),
                   noise_sigma=8.0, rng_seed=21)


@pytest.fixture(scope="module")
def served(tmp_path_factory):
    d = tmp_path_factory.mktemp("service")
    vol, truth, contour = generate_phantom(SPEC)
    save_volume(vol, str(d / "vol.nrrd"))
    save_mask(truth, str(d / "truth.nrrd"))
    app = create_app(str(d / "vol.nrrd"), truth_path=str(d / "truth.nrrd"))
    client = TestClient(app)
    return client, app, vol, truth, contour


class TestVolumeEndpoint:
    def test_metadata(self, served):
        client, app, vol, truth, _ = served
        meta = client.get("/api/volume").json()
        assert meta["dims"] == [64, 64, 64]
        assert meta["spacing_mm"] == [1.0, 1.0, 1.0]
        assert meta["intensity_min"] <= meta["intensity_max"]
        assert meta["has_truth"] is True

    def test_no_truth(self, tmp_path):
        vol, _, _ = generate_phantom(SPEC)
        save_volume(vol, str(tmp_path / "v.nrrd"))
        client = TestClient(create_app(str(tmp_path / "v.nrrd")))
        assert client.get("/api/volume").json()["has_truth"] is False

    def test_broken_volume_refuses_to_start(self, tmp_path):
        (tmp_path / "bad.nrrd").write_bytes(b"garbage")
        with pytest.raises(Exception):
            create_app(str(tmp_path / "bad.nrrd"))


class TestSliceEndpoint:
    def test_dimensions_and_headers(self, served):
        client, app, vol, _, _ = served
        r = client.get("/api/slice/z/32")
        assert r.status_code == 200
        assert r.headers["X-Width"] == "64"
        assert r.headers["X-Height"] == "64"
        assert len(r.content) == 64 * 64

    def test_pixel_oracle(self, served):
        client, app, vol, _, _ = served
        lo, hi = 100.0, 200.0
        r = client.get("/api/slice/z/32", params={"lo": lo, "hi": hi})
        body = np.frombuffer(r.content, dtype=np.uint8)
        img = extract_slice(vol, "z", 32)
        rng = np.random.default_rng(3)
        w = int(r.headers["X-Width"])
        for _ in range(100):
            i = int(rng.integers(0, 64))
            j = int(rng.integers(0, 64))
            expect = np.clip(np.round((img[i, j] - lo) / (hi - lo) * 255.0), 0, 255)
            assert body[i + j * w] == expect

    def test_degenerate_window_all_zero(self, served):
        client, *_ = served
        r = client.get("/api/slice/z/10", params={"lo": 50.0, "hi": 50.0})
        assert set(r.content) == {0}

    def test_out_of_range_404(self, served):
        client, *_ = served
        assert client.get("/api/slice/z/64").status_code == 404
        assert client.get("/api/slice/w/0").status_code == 404

    def test_repeat_get_identical(self, served):
        client, *_ = served
        a = client.get("/api/slice/y/20").content
        b = client.get("/api/slice/y/20").content
        assert a == b

    def test_constant_slice_uniform_bytes(self, tmp_path):
        from balloonseg.volume import Volume3D

        vol = Volume3D(scalars=np.full((8, 8, 8), 42.0))
        save_volume(vol, str(tmp_path / "c.nrrd"))
        client = TestClient(create_app(str(tmp_path / "c.nrrd")))
        r = client.get("/api/slice/z/3", params={"lo": 0.0, "hi": 84.0})
        assert set(r.content) == {128}


class TestSegmentEndpoint:
    def test_successful_run_with_dsc(self, served):
        client, app, vol, truth, contour = served
        r = client.post("/api/segment", json={"contour": json.loads(contour.to_json())})
        assert r.status_code == 200
        body = r.json()
        assert body["dsc_percent"] >= 80.0
        assert body["termination_reason"] == "stalled"
        assert body["result_id"] == 1 or body["result_id"] >= 1
        assert body["voxel_count"] > 0

    def test_service_equals_direct_segment(self, served):
        client, app, vol, truth, contour = served
        r = client.post("/api/segment", json={"contour": json.loads(contour.to_json())})
        rid = r.json()["result_id"]
        direct = segment(vol, process_contour(vol, contour), truth=truth)
        stored = app.state.results[rid]
        assert np.array_equal(stored.mask.bits, direct.mask.bits)
        assert r.json()["voxel_count"] == direct.voxel_count

    def test_two_point_contour_422(self, served):
        client, *_ = served
        r = client.post("/api/segment", json={
            "contour": {"axis": "z", "slice_index": 32, "points_vox": [[0, 0], [1, 1]]}
        })
        assert r.status_code == 422
        assert "contour" in r.json()["detail"]

    def test_missing_contour_key_422(self, served):
        client, *_ = served
        assert client.post("/api/segment", json={}).status_code == 422

    def test_unknown_config_field_422(self, served):
        client, app, vol, truth, contour = served
        r = client.post("/api/segment", json={
            "contour": json.loads(contour.to_json()),
            "config": {"nope": 1},
        })
        assert r.status_code == 422

    def test_busy_returns_409(self, served):
        client, app, vol, truth, contour = served
        assert app.state.segment_lock.acquire(blocking=False)
        try:
            r = client.post("/api/segment", json={"contour": json.loads(contour.to_json())})
            assert r.status_code == 409
        finally:
            app.state.segment_lock.release()


class TestMaskEndpoint:
    def test_rle_round_trip(self, served):
        client, app, vol, truth, contour = served
        rid = client.post("/api/segment", json={"contour": json.loads(contour.to_json())}).json()["result_id"]
        stored = app.state.results[rid]
        for axis, index in (("z", 32), ("x", 30), ("y", 35), ("z", 0)):
            runs = client.get(f"/api/mask/{rid}/{axis}/{index}").json()["runs"]
            from balloonseg.volume import extract_mask_slice

            flat = extract_mask_slice(stored.mask, axis, index).ravel(order="F")
            decoded = np.zeros(len(flat), dtype=bool)
            for start, length in runs:
                decoded[start : start + length] = True
            assert np.array_equal(decoded, flat)

    def test_unknown_id_404(self, served):
        client, *_ = served
        assert client.get("/api/mask/999/z/0").status_code == 404

    def test_empty_and_full_slices(self):
        bits = np.zeros((4, 4, 2), dtype=bool)
        bits[:, :, 1] = True
        m = Mask3D(bits=bits)
        assert mask_slice_runs(m, "z", 0) == []
        assert mask_slice_runs(m, "z", 1) == [[0, 16]]

    def test_run_encoding_segments(self):
        bits = np.zeros((4, 1, 1), dtype=bool)
        bits[1, 0, 0] = True
        bits[3, 0, 0] = True
        m = Mask3D(bits=bits)
        assert mask_slice_runs(m, "z", 0) == [[1, 1], [3, 1]]


class TestWindowSlice:
    def test_formula(self):
        img = np.array([[0.0, 50.0], [100.0, 200.0]])
        body = window_slice(img, 0.0, 100.0)
        arr = np.frombuffer(body, dtype=np.uint8)
        # row-major: fast axis (u) contiguous -> img[0,0], img[1,0], img[0,1], img[1,1]
        assert list(arr) == [0, 255, 128, 255]

    def test_clip_below(self):
        img = np.array([[-50.0]])
        assert window_slice(img, 0.0, 100.0) == b"\x00"
