from __future__ import annotations

import numpy as np
import pytest
import torch

from c3det.core import Box, ClassCatalog, Detection, RandomSource, UserInput
from c3det.evalharness import (
    CurvePoint,
    passthrough,
    predict_with_click_prefixes,
    run_matrix,
    run_passthrough_session,
    run_protocol,
    run_session,
    summarize,
    write_curve_csv,
)
from c3det.model import C3DetNet, ModelConfig, save_checkpoint
from c3det.simulate import SimConfig
from conftest import random_image


def _d(x0, y0, x1, y1, c, s):
    return Detection(box=Box(x0, y0, x1, y1), class_id=c, score=s)


@pytest.fixture
def tiny_model():
    torch.manual_seed(0)
    return C3DetNet(
        8, ModelConfig(backbone_channels=8, lf_channels=8, fusion_proj_channels=8)
    )


@pytest.fixture
def tiny_test_set():
    rng = RandomSource(1, "evaldata")
    return [
        random_image(rng.child(str(i)), image_id=f"t{i}", size=(32, 32), n_objects=4)
        for i in range(3)
    ]


class TestPassthrough:
    def test_click_rewrites_class_and_score(self):
        dets = [_d(0, 0, 10, 10, 0, 0.6)]
        out = passthrough(dets, [UserInput(x=5, y=5, class_id=3)])
        assert out[0].class_id == 3 and out[0].score == 1.0
        assert dets[0].class_id == 0  # input untouched

    def test_click_in_empty_space_ignored(self):
        dets = [_d(0, 0, 4, 4, 0, 0.6)]
        out = passthrough(dets, [UserInput(x=20, y=20, class_id=3)])
        assert out == dets

    def test_nested_boxes_highest_score_wins(self):
        dets = [_d(0, 0, 20, 20, 0, 0.9), _d(4, 4, 12, 12, 1, 0.4)]
        out = passthrough(dets, [UserInput(x=8, y=8, class_id=5)])
        assert out[0].class_id == 5 and out[0].score == 1.0
        assert out[1] == dets[1]

    def test_no_clicks_identity(self):
        dets = [_d(0, 0, 4, 4, 2, 0.5)]
        assert passthrough(dets, []) == dets


class TestRunSession:
    def test_zero_clicks_is_plain_detector(self, tiny_model, tiny_test_set):
        points = run_session(
            tiny_model, tiny_test_set, RandomSource(0, "s"), SimConfig(), click_counts=[0]
        )
        assert points[0].clicks == 0

    def test_same_stream_identical_curve(self, tiny_model, tiny_test_set):
        cfg = SimConfig(eval_max_clicks=4)
        a = run_session(tiny_model, tiny_test_set, RandomSource(5, "x"), cfg)
        b = run_session(tiny_model, tiny_test_set, RandomSource(5, "x"), cfg)
        assert a == b

    def test_clicks_cap_at_object_count(self, tiny_model, tiny_test_set):
        # Each image has 4 objects: predictions for t >= 4 reuse the same
        # 4 clicks, so the mAP value freezes beyond that point.
        cfg = SimConfig(eval_max_clicks=6)
        points = run_session(tiny_model, tiny_test_set, RandomSource(2, "cap"), cfg)
        values = [p.map_value for p in points]
        assert values[4] == values[5] == values[6]

    def test_prefix_purity(self, tiny_model, tiny_test_set):
        # Predictions at click t only depend on the first t clicks.
        img = tiny_test_set[0]
        from c3det.simulate import draw_session_clicks

        clicks = draw_session_clicks(img, RandomSource(3, "pp"), SimConfig())
        both = predict_with_click_prefixes(tiny_model, img, clicks, [0, 2, 4])
        again = predict_with_click_prefixes(tiny_model, img, clicks[:2], [2])
        assert both[2] == again[2]


class TestProtocol:
    def test_single_session_zero_std(self, tiny_model, tiny_test_set):
        cfg = SimConfig(eval_max_clicks=3, eval_sessions=1)
        summary = run_protocol(tiny_model, tiny_test_set, cfg, base_seed=0)
        assert summary.std == [0.0] * len(summary.clicks)

    def test_five_sessions_aggregated(self, tiny_model, tiny_test_set):
        cfg = SimConfig(eval_max_clicks=2, eval_sessions=5)
        summary = run_protocol(tiny_model, tiny_test_set, cfg, base_seed=0)
        assert summary.clicks == [0, 1, 2]
        assert len(summary.points) == 3 * 5

    def test_csv_byte_identical_across_runs(self, tiny_model, tiny_test_set, tmp_path):
        cfg = SimConfig(eval_max_clicks=2, eval_sessions=2)
        run_protocol(tiny_model, tiny_test_set, cfg, base_seed=7, out_csv=tmp_path / "a.csv")
        run_protocol(tiny_model, tiny_test_set, cfg, base_seed=7, out_csv=tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.summary.csv").read_bytes() == (
            tmp_path / "b.summary.csv"
        ).read_bytes()

    def test_summarize_validates_session_count(self):
        points = [CurvePoint(0, 0, 0.5)]
        with pytest.raises(ValueError, match="sessions"):
            summarize(points, expected_sessions=2)


class TestMatrix:
    def test_passthrough_at_zero_equals_detector(self, tiny_test_set, tmp_path):
        torch.manual_seed(3)
        cfg = ModelConfig(
            backbone_channels=8, lf_channels=8, fusion_proj_channels=8,
            variant="detector_only",
        )
        model = C3DetNet(8, cfg)
        catalog = ClassCatalog(tuple(f"c{i}" for i in range(8)))
        ckpt = tmp_path / "det.ckpt"
        save_checkpoint(ckpt, model, catalog)
        sim = SimConfig(eval_max_clicks=3, eval_sessions=2)
        summaries = run_matrix(
            {"detector_only": ckpt, "passthrough": ckpt},
            tiny_test_set,
            tmp_path / "out",
            sim,
            base_seed=11,
        )
        det0 = summaries["detector_only"].at(0)
        pt0 = summaries["passthrough"].at(0)
        assert det0[0] == pt0[0]
        assert abs(det0[0] - pt0[0]) < 1e-12
        assert (tmp_path / "out/combined.csv").exists()

    def test_passthrough_requires_detector_checkpoint(self, tiny_model, tiny_test_set):
        with pytest.raises(ValueError, match="detector_only"):
            run_passthrough_session(
                tiny_model, tiny_test_set, RandomSource(0, "x"), SimConfig()
            )

    def test_missing_checkpoint_reported(self, tiny_test_set, tmp_path):
        with pytest.raises(FileNotFoundError, match="ghost"):
            run_matrix({"ghost": tmp_path / "none.ckpt"}, tiny_test_set, tmp_path / "o")


class TestCsv:
    def test_curve_csv_layout(self, tmp_path):
        points = [CurvePoint(0, 0, 0.25), CurvePoint(1, 0, 0.5)]
        write_curve_csv(tmp_path / "c.csv", points)
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0] == "clicks,session,map"
        assert lines[1].startswith("0,0,0.25")
