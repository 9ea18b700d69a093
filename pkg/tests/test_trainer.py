from __future__ import annotations

import numpy as np
import pytest

import c3det.trainer as trainer_mod
from c3det.core import ClassCatalog, RandomSource
from c3det.model import ModelConfig, ModelError
from c3det.trainer import TrainConfig, TrainingDiverged, subset, train
from conftest import make_image, random_image


def micro_model_cfg(**kw) -> ModelConfig:
    base = dict(backbone_channels=8, lf_channels=8, fusion_proj_channels=8, stride=4)
    base.update(kw)
    return ModelConfig(**base)


def micro_train_cfg(**kw) -> TrainConfig:
    base = dict(epochs=1, batch_size=4, lr=0.01, warmup_steps=10, lr_decay_epochs=())
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture
def tiny_data():
    rng = RandomSource(0, "traindata")
    return [
        random_image(rng.child(str(i)), image_id=f"im{i}", size=(32, 32), n_objects=3)
        for i in range(8)
    ]


@pytest.fixture
def catalog8():
    return ClassCatalog(tuple(f"c{i}" for i in range(8)))


class TestSubset:
    def _images(self, n):
        img = make_image("proto", size=(4, 4))
        out = []
        for i in range(n):
            out.append(
                type(img)(image_id=f"i{i}", pixels=img.pixels, objects=())
            )
        return out

    def test_full_fraction_keeps_all(self):
        imgs = self._images(10)
        out = subset(imgs, 1.0, seed=3)
        assert sorted(i.image_id for i in out) == sorted(i.image_id for i in imgs)
        assert [i.image_id for i in out] != [i.image_id for i in imgs]  # shuffled

    def test_five_percent_of_dota_sized_train_set(self):
        # floor(0.05 * 11198) = 559, matching the published subset size.
        imgs = self._images(11198)
        assert len(subset(imgs, 0.05, seed=0)) == 559

    def test_deterministic(self):
        imgs = self._images(50)
        a = [i.image_id for i in subset(imgs, 0.3, seed=9)]
        b = [i.image_id for i in subset(imgs, 0.3, seed=9)]
        assert a == b

    def test_minimum_one(self):
        imgs = self._images(3)
        assert len(subset(imgs, 0.01, seed=0)) == 1

    def test_invalid_fraction(self):
        with pytest.raises(ValueError):
            subset(self._images(3), 0.0, seed=0)


class TestTrainLoop:
    def test_one_epoch_step_count(self, tmp_path, tiny_data, catalog8):
        result = train(
            tiny_data, catalog8, micro_model_cfg(), micro_train_cfg(batch_size=4),
            tmp_path / "run",
        )
        assert len(result.loss_log) == 2  # 8 images / batch 4
        assert result.checkpoint_path.exists()
        assert result.log_path.exists()
        header = result.log_path.read_text().splitlines()[0]
        assert header == "step,epoch,lr,loss_total,loss_cls,loss_box,loss_uel"

    def test_warmup_ramp(self, tmp_path, tiny_data, catalog8):
        cfg = micro_train_cfg(epochs=3, batch_size=2, warmup_steps=8)
        result = train(tiny_data, catalog8, micro_model_cfg(), cfg, tmp_path / "run")
        lrs = [row["lr"] for row in result.loss_log]
        assert lrs[0] < lrs[7]
        assert lrs[0] == pytest.approx(cfg.lr / 8)
        assert lrs[7] == pytest.approx(cfg.lr)
        # Linear ramp between.
        assert lrs[3] == pytest.approx(cfg.lr * 4 / 8)

    def test_bitwise_deterministic(self, tmp_path, tiny_data, catalog8):
        a = train(tiny_data, catalog8, micro_model_cfg(), micro_train_cfg(), tmp_path / "a")
        b = train(tiny_data, catalog8, micro_model_cfg(), micro_train_cfg(), tmp_path / "b")
        assert (a.log_path.read_bytes()) == (b.log_path.read_bytes())

    def test_detector_only_ignores_click_seed(self, tmp_path, tiny_data, catalog8):
        cfg_model = micro_model_cfg(variant="detector_only")
        a = train(
            tiny_data, catalog8, cfg_model, micro_train_cfg(click_seed=1), tmp_path / "a"
        )
        b = train(
            tiny_data, catalog8, cfg_model, micro_train_cfg(click_seed=2), tmp_path / "b"
        )
        assert a.log_path.read_bytes() == b.log_path.read_bytes()

    def test_full_variant_depends_on_click_seed(self, tmp_path, tiny_data, catalog8):
        a = train(
            tiny_data, catalog8, micro_model_cfg(), micro_train_cfg(click_seed=1), tmp_path / "a"
        )
        b = train(
            tiny_data, catalog8, micro_model_cfg(), micro_train_cfg(click_seed=2), tmp_path / "b"
        )
        assert a.log_path.read_bytes() != b.log_path.read_bytes()

    def test_k_histogram_populated(self, tmp_path, tiny_data, catalog8):
        result = train(
            tiny_data, catalog8, micro_model_cfg(), micro_train_cfg(epochs=4), tmp_path / "r"
        )
        assert sum(result.k_histogram.values()) == 4 * len(tiny_data)
        assert all(0 <= k <= 3 for k in result.k_histogram)  # N_a = 3 caps K

    def test_divergence_retains_last_checkpoint(self, tmp_path, tiny_data, catalog8, monkeypatch):
        calls = {"n": 0}
        real = trainer_mod.total_loss

        def failing(out, imgs, inputs, cfg):
            calls["n"] += 1
            if calls["n"] > 3:
                raise ModelError("non-finite loss_total: nan")
            return real(out, imgs, inputs, cfg)

        monkeypatch.setattr(trainer_mod, "total_loss", failing)
        cfg = micro_train_cfg(epochs=3, batch_size=4)
        with pytest.raises(TrainingDiverged, match="last good checkpoint"):
            train(tiny_data, catalog8, micro_model_cfg(), cfg, tmp_path / "run")
        # Epoch 0 completed (2 steps) before the failure at step 4.
        assert (tmp_path / "run/last.ckpt").exists()
        assert (tmp_path / "run/loss_log.csv").exists()

    def test_empty_training_set_rejected(self, tmp_path, catalog8):
        with pytest.raises(ValueError):
            train([], catalog8, micro_model_cfg(), micro_train_cfg(), tmp_path / "x")

    def test_validation_tracks_best(self, tmp_path, tiny_data, catalog8):
        result = train(
            tiny_data,
            catalog8,
            micro_model_cfg(),
            micro_train_cfg(epochs=2, val_every=1),
            tmp_path / "run",
            val_images=tiny_data[:2],
        )
        assert result.best_checkpoint_path is not None
        assert result.best_val_map is not None
