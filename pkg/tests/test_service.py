import base64
import io
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from scalebranch.checkpoint import save_checkpoint
from scalebranch.config import OptimSpec
from scalebranch.data import Pyramid
from scalebranch.latent import BranchedLatent, fuse, sample_latent, SamplePolicy
from scalebranch.networks import generate
from scalebranch.service import create_app
from scalebranch.training import (
    ScheduleStage,
    make_checkpoint,
    run_progressive,
    train_encoder,
)


@pytest.fixture(scope="module")
def service(tiny_config, tiny_corpus, tmp_path_factory):
    """A live app over one briefly trained checkpoint (with encoder) and one
    encoder-less checkpoint."""
    root = tmp_path_factory.mktemp("service")
    pyr = Pyramid(tiny_corpus, [tiny_config.resolution(s) for s in (1, 2)])
    sched = tuple(ScheduleStage(index=s, steps=4) for s in (1, 2))
    optim = OptimSpec(batch_size=8)
    res = run_progressive(tiny_config, sched, pyr, optim, seed=0)
    enc, _ = train_encoder(res.generator, optim, steps=4, seed=0)
    with_enc = str(root / "with_enc.ckpt")
    save_checkpoint(
        with_enc,
        make_checkpoint(
            tiny_config, res.generator, res.discriminator, res.g_opt, res.d_opt,
            res.state, seed=0, schedule=sched, encoder=enc,
        ),
    )
    bare = str(root / "bare.ckpt")
    save_checkpoint(
        bare,
        make_checkpoint(
            tiny_config, res.generator, res.discriminator, res.g_opt, res.d_opt,
            res.state, seed=0, schedule=sched,
        ),
    )
    app = create_app({"main": with_enc, "bare": bare})
    client = TestClient(app)
    return client, res.generator, tiny_config


def _wait_for_job(client, job_id, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        ticket = client.get(f"/jobs/{job_id}").json()
        if ticket["status"] in ("done", "failed"):
            return ticket
        time.sleep(0.05)
    raise TimeoutError(f"job {job_id} did not finish")


def _png_to_array(b64: str) -> np.ndarray:
    raw = base64.b64decode(b64)
    with Image.open(io.BytesIO(raw)) as im:
        return np.asarray(im.convert("RGB"))


class TestModels:
    def test_healthz(self, service):
        client, _, _ = service
        body = client.get("/healthz").json()
        assert body == {"status": "ok", "models": 2}

    def test_listing(self, service):
        client, _, config = service
        body = client.get("/models").json()
        names = {m["name"] for m in body["models"]}
        assert names == {"main", "bare"}
        main = next(m for m in body["models"] if m["name"] == "main")
        assert main["resolution"] == [16, 16]
        assert main["subvector_dims"] == list(config.subvector_dims)
        assert main["has_encoder"] is True
        bare = next(m for m in body["models"] if m["name"] == "bare")
        assert bare["has_encoder"] is False


class TestGenerate:
    def test_from_seed_is_deterministic(self, service):
        client, _, _ = service
        a = client.post("/generate", json={"model": "main", "seed": 5}).json()
        b = client.post("/generate", json={"model": "main", "seed": 5}).json()
        assert a == b

    def test_from_latent_matches_library(self, service):
        client, g, config = service
        lat = sample_latent(config, SamplePolicy.all_uniform(2), seed=9)
        body = client.post(
            "/generate", json={"model": "main", "latent": lat.to_json_obj()}
        ).json()
        assert body["latent"] == lat.to_json_obj()
        served = _png_to_array(body["image_png_b64"])
        local = np.clip(generate(g, lat) * 255.0, 0, 255).round().astype(np.uint8)
        np.testing.assert_array_equal(served, local)

    def test_png_negotiation(self, service):
        client, _, _ = service
        resp = client.post(
            "/generate",
            json={"model": "main", "seed": 1},
            headers={"accept": "image/png"},
        )
        assert resp.headers["content-type"] == "image/png"
        with Image.open(io.BytesIO(resp.content)) as im:
            assert im.size == (16, 16)

    def test_latent_and_seed_both_rejected(self, service):
        client, _, config = service
        lat = sample_latent(config, SamplePolicy.all_uniform(2), seed=0)
        resp = client.post(
            "/generate",
            json={"model": "main", "latent": lat.to_json_obj(), "seed": 1},
        )
        assert resp.status_code == 422

    def test_neither_rejected(self, service):
        client, _, _ = service
        assert client.post("/generate", json={"model": "main"}).status_code == 422

    def test_unknown_model(self, service):
        client, _, _ = service
        resp = client.post("/generate", json={"model": "nope", "seed": 0})
        assert resp.status_code == 404

    def test_malformed_latent(self, service):
        client, _, _ = service
        resp = client.post(
            "/generate", json={"model": "main", "latent": {"subvectors": [[2.0]]}}
        )
        assert resp.status_code == 422

    def test_wrong_dims(self, service):
        client, _, _ = service
        resp = client.post(
            "/generate",
            json={"model": "main", "latent": {"subvectors": [[0.0], [0.0]]}},
        )
        assert resp.status_code == 422
        assert "do not match" in resp.json()["detail"]


class TestSweep:
    def test_frames_follow_values(self, service):
        client, g, config = service
        base = sample_latent(config, SamplePolicy.all_uniform(2), seed=3)
        body = client.post(
            "/sweep",
            json={
                "model": "main",
                "latent": base.to_json_obj(),
                "subvector": 1,
                "values": [-1.0, 1.0],
            },
        ).json()
        assert body["values"] == [-1.0, 1.0]
        assert len(body["frames"]) == 2
        first = BranchedLatent.from_json_obj(body["frames"][0]["latent"])
        np.testing.assert_array_equal(first.subvectors[1], np.full(4, -1.0, np.float32))
        np.testing.assert_array_equal(first.subvectors[0], base.subvectors[0])

    def test_bad_subvector_index(self, service):
        client, _, _ = service
        resp = client.post("/sweep", json={"model": "main", "seed": 0, "subvector": 7})
        assert resp.status_code == 422


class TestFuse:
    def test_matches_library_fuse(self, service):
        client, g, config = service
        a = sample_latent(config, SamplePolicy.all_uniform(2), seed=1)
        b = sample_latent(config, SamplePolicy.all_uniform(2), seed=2)
        body = client.post(
            "/fuse",
            json={
                "model": "main",
                "a": a.to_json_obj(),
                "b": b.to_json_obj(),
                "take_from_a": [0],
            },
        ).json()
        expected = fuse(a, b, [0])
        assert BranchedLatent.from_json_obj(body["latent"]) == expected
        served = _png_to_array(body["image_png_b64"])
        local = np.clip(generate(g, expected) * 255.0, 0, 255).round().astype(np.uint8)
        np.testing.assert_array_equal(served, local)

    def test_out_of_range_selection(self, service):
        client, _, config = service
        a = sample_latent(config, SamplePolicy.all_uniform(2), seed=1)
        resp = client.post(
            "/fuse",
            json={
                "model": "main",
                "a": a.to_json_obj(),
                "b": a.to_json_obj(),
                "take_from_a": [5],
            },
        )
        assert resp.status_code == 422


class TestCandidates:
    def test_prefix_is_respected(self, service):
        client, _, config = service
        prefix = [[0.25, -0.25, 0.5, -0.5]]
        body = client.post(
            "/candidates",
            json={"model": "main", "prefix": prefix, "count": 4, "seed": 7},
        ).json()
        assert len(body["candidates"]) == 4
        flats = []
        for cand in body["candidates"]:
            lat = BranchedLatent.from_json_obj(cand["latent"])
            np.testing.assert_array_equal(
                lat.subvectors[0], np.asarray(prefix[0], np.float32)
            )
            flats.append(lat.flat())
        # Unfixed sub-vectors differ between candidates.
        assert not np.array_equal(flats[0][4:], flats[1][4:])

    def test_finer_subvectors_stay_zero(self, service):
        client, _, _ = service
        body = client.post(
            "/candidates", json={"model": "main", "prefix": [], "count": 3, "seed": 2}
        ).json()
        for cand in body["candidates"]:
            lat = BranchedLatent.from_json_obj(cand["latent"])
            assert np.count_nonzero(lat.subvectors[0]) > 0
            np.testing.assert_array_equal(lat.subvectors[1], np.zeros(4, np.float32))

    def test_same_seed_same_grid(self, service):
        client, _, _ = service
        req = {"model": "main", "prefix": [], "count": 3, "seed": 11}
        assert client.post("/candidates", json=req).json() == client.post(
            "/candidates", json=req
        ).json()

    def test_full_prefix_rejected(self, service):
        client, _, _ = service
        resp = client.post(
            "/candidates",
            json={"model": "main", "prefix": [[0.0] * 4, [0.0] * 4], "count": 2},
        )
        assert resp.status_code == 422

    def test_count_bounds(self, service):
        client, _, _ = service
        resp = client.post("/candidates", json={"model": "main", "count": 65})
        assert resp.status_code == 422

    def test_prefix_length_checked(self, service):
        client, _, _ = service
        resp = client.post(
            "/candidates", json={"model": "main", "prefix": [[0.0, 0.0]], "count": 2}
        )
        assert resp.status_code == 422

    def test_prefix_box_checked(self, service):
        client, _, _ = service
        resp = client.post(
            "/candidates", json={"model": "main", "prefix": [[2.0] * 4], "count": 2}
        )
        assert resp.status_code == 422


class TestEditJobs:
    def _color_payload(self, value=0.6):
        return np.full((16, 16, 3), value, np.float32).tolist()

    def test_color_only_job_completes(self, service):
        client, _, _ = service
        resp = client.post(
            "/edit",
            json={
                "model": "main",
                "color": self._color_payload(),
                "config": {"steps": 3, "restarts": 1},
            },
        )
        assert resp.status_code == 200
        ticket = _wait_for_job(client, resp.json()["job_id"])
        assert ticket["status"] == "done"
        result = ticket["result"]
        assert result["init_kind"] == "encoder"
        assert len(result["trace"]) == 4
        assert result["loss"] <= result["trace"][0] + 1e-12
        lat = BranchedLatent.from_json_obj(result["latent"])
        assert np.abs(lat.flat()).max() <= 1.0

    def test_png_color_payload(self, service):
        client, _, _ = service
        arr = np.full((16, 16, 3), 128, np.uint8)
        buf = io.BytesIO()
        Image.fromarray(arr).save(buf, format="PNG")
        b64 = base64.b64encode(buf.getvalue()).decode("ascii")
        resp = client.post(
            "/edit",
            json={"model": "main", "color": b64, "config": {"steps": 2, "restarts": 1}},
        )
        ticket = _wait_for_job(client, resp.json()["job_id"])
        assert ticket["status"] == "done"

    def test_encoderless_model_falls_back_to_random(self, service):
        client, _, _ = service
        resp = client.post(
            "/edit",
            json={
                "model": "bare",
                "color": self._color_payload(),
                "config": {"steps": 2, "restarts": 1},
            },
        )
        ticket = _wait_for_job(client, resp.json()["job_id"])
        assert ticket["status"] == "done"
        assert ticket["result"]["init_kind"] == "random"

    def test_empty_constraints_rejected_synchronously(self, service):
        client, _, _ = service
        resp = client.post("/edit", json={"model": "main"})
        assert resp.status_code == 422
        assert "empty" in resp.json()["detail"]

    def test_bad_mask_rejected(self, service):
        client, _, _ = service
        resp = client.post(
            "/edit",
            json={
                "model": "main",
                "color": self._color_payload(),
                "mask": np.full((16, 16), 0.5).tolist(),
            },
        )
        assert resp.status_code == 422

    def test_unknown_job(self, service):
        client, _, _ = service
        assert client.get("/jobs/doesnotexist").status_code == 404
