import json
import zipfile

import numpy as np
import pytest

from scalebranch.checkpoint import (
    Checkpoint,
    CheckpointError,
    FORMAT_VERSION,
    load_checkpoint,
    save_checkpoint,
)


def _sample(tiny_config):
    rng = np.random.default_rng(0)
    return Checkpoint(
        config=tiny_config,
        stage=2,
        tensors={
            "generator.latent_in.weight": rng.normal(size=(6, 4)).astype(np.float32),
            "optim_g.m.latent_in.weight": rng.normal(size=(6, 4)),
            "optim_g.t.latent_in.weight": np.array(17, dtype=np.int64),
        },
        train_state={"global_step": 42, "stage_pos": 1},
        metadata={"seed": 7},
    )


class TestRoundTrip:
    def test_bitwise_identical(self, tiny_config, tmp_path):
        ckpt = _sample(tiny_config)
        path = str(tmp_path / "a.ckpt")
        save_checkpoint(path, ckpt)
        loaded = load_checkpoint(path)
        assert set(loaded.tensors) == set(ckpt.tensors)
        for name, arr in ckpt.tensors.items():
            got = loaded.tensors[name]
            assert got.dtype == arr.dtype
            assert got.shape == arr.shape
            np.testing.assert_array_equal(got, arr)
        assert loaded.config == ckpt.config
        assert loaded.stage == 2
        assert loaded.train_state == {"global_step": 42, "stage_pos": 1}
        assert loaded.metadata == {"seed": 7}

    def test_save_is_deterministic(self, tiny_config, tmp_path):
        ckpt = _sample(tiny_config)
        p1, p2 = str(tmp_path / "a.ckpt"), str(tmp_path / "b.ckpt")
        save_checkpoint(p1, ckpt)
        save_checkpoint(p2, ckpt)
        m1 = zipfile.ZipFile(p1).read("manifest.json")
        m2 = zipfile.ZipFile(p2).read("manifest.json")
        assert m1 == m2

    def test_group_strips_prefix(self, tiny_config, tmp_path):
        path = str(tmp_path / "a.ckpt")
        save_checkpoint(path, _sample(tiny_config))
        loaded = load_checkpoint(path)
        gen = loaded.group("generator")
        assert list(gen) == ["latent_in.weight"]
        assert "latent_in.weight" in loaded.group("optim_g.m")

    def test_no_leftover_temp_files(self, tiny_config, tmp_path):
        save_checkpoint(str(tmp_path / "a.ckpt"), _sample(tiny_config))
        assert [p.name for p in tmp_path.iterdir()] == ["a.ckpt"]

    def test_overwrite_is_atomic_replacement(self, tiny_config, tmp_path):
        path = str(tmp_path / "a.ckpt")
        ckpt = _sample(tiny_config)
        save_checkpoint(path, ckpt)
        ckpt.train_state["global_step"] = 99
        save_checkpoint(path, ckpt)
        assert load_checkpoint(path).train_state["global_step"] == 99


class TestValidation:
    def test_unsupported_dtype(self, tiny_config, tmp_path):
        ckpt = Checkpoint(tiny_config, 1, {"x": np.zeros(3, np.int32)})
        with pytest.raises(CheckpointError, match="dtype"):
            save_checkpoint(str(tmp_path / "a.ckpt"), ckpt)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="no checkpoint"):
            load_checkpoint(str(tmp_path / "missing.ckpt"))

    def test_not_a_zip(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"garbage bytes")
        with pytest.raises(CheckpointError, match="unreadable"):
            load_checkpoint(str(path))

    def test_corrupted_blob_detected(self, tiny_config, tmp_path):
        path = str(tmp_path / "a.ckpt")
        save_checkpoint(path, _sample(tiny_config))
        # Rewrite one tensor blob with flipped bytes but leave the manifest.
        with zipfile.ZipFile(path) as zf:
            items = {n: zf.read(n) for n in zf.namelist()}
        victim = "tensors/generator.latent_in.weight.bin"
        blob = bytearray(items[victim])
        blob[0] ^= 0xFF
        items[victim] = bytes(blob)
        with zipfile.ZipFile(path, "w") as zf:
            for name, raw in items.items():
                zf.writestr(name, raw)
        with pytest.raises(CheckpointError, match="checksum"):
            load_checkpoint(path)

    def test_future_format_version(self, tiny_config, tmp_path):
        path = str(tmp_path / "a.ckpt")
        save_checkpoint(path, _sample(tiny_config))
        with zipfile.ZipFile(path) as zf:
            manifest = json.loads(zf.read("manifest.json"))
            items = {n: zf.read(n) for n in zf.namelist() if n != "manifest.json"}
        manifest["format_version"] = FORMAT_VERSION + 1
        with zipfile.ZipFile(path, "w") as zf:
            zf.writestr("manifest.json", json.dumps(manifest))
            for name, raw in items.items():
                zf.writestr(name, raw)
        with pytest.raises(CheckpointError, match="format"):
            load_checkpoint(path)

    def test_missing_blob(self, tiny_config, tmp_path):
        path = str(tmp_path / "a.ckpt")
        save_checkpoint(path, _sample(tiny_config))
        with zipfile.ZipFile(path) as zf:
            items = {n: zf.read(n) for n in zf.namelist()}
        del items["tensors/optim_g.t.latent_in.weight.bin"]
        with zipfile.ZipFile(path, "w") as zf:
            for name, raw in items.items():
                zf.writestr(name, raw)
        with pytest.raises(CheckpointError, match="unreadable"):
            load_checkpoint(path)
