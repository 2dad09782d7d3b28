# Copyright (c) 2026 The moelora Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#   http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import math

import numpy as np
import pytest

import moelora

SMALL = {"layers": 1, "model_dim": 8, "heads": 2, "ffn_dim": 16, "head_hidden": 4, "lora_rank": 2}


def test_paper_counts():
    assert moelora.count_params("moe_lora", 3, 8)["total_text"] == "5.76M"
    assert moelora.count_params("single_lora", 1, 4)["total_text"] == "1.23M"
    assert moelora.count_params("moe_lora", 7, 8)["head"] == 447000


def test_eer():
    assert moelora.compute_eer([0.9, 0.8], [0.2, 0.1])[0] == 0.0
    eer, _ = moelora.compute_eer([0.9, 0.8, 0.7, 0.3], [0.6, 0.4, 0.2, 0.1])
    assert eer == pytest.approx(0.25)
    pts = moelora.det_points([1.0], [0.0])
    assert [(p[1], p[2]) for p in pts] == [(1.0, 0.0), (0.0, 0.0), (0.0, 1.0)]
    with pytest.raises(ValueError):
        moelora.compute_eer([0.1], [])


def test_clip_generation():
    a = moelora.gen_clip("A04", 30, 5)
    assert a.shape == (30, 16)
    assert np.all(a[:, 4:8] == 0.0)
    assert np.array_equal(a, moelora.gen_clip("A04", 30, 5))
    assert len(np.unique(moelora.gen_clip("A02", 50, 1)[:, 0])) <= 8
    with pytest.raises(ValueError):
        moelora.gen_clip("A09", 30, 5)


def test_zero_init_transparency():
    clip = moelora.gen_clip("bona", 40, 2)
    adapted = moelora.Model({"adapter_mode": "moe_lora"})
    plain = moelora.Model({"adapter_mode": "none"})
    assert adapted.score(clip) == plain.score(clip)
    assert adapted.num_trainable > plain.num_trainable
    assert all(s == 0.0 for *_, s in adapted.expert_sigma())


def test_fit_and_checkpoint(tmp_path):
    data = tmp_path / "data"
    assert moelora.write_corpus(str(data), seed=3, scale=0.02) == 64
    clips = moelora.load_corpus(str(data))
    assert {c["split"] for c in clips} == {"train", "dev", "eval_id", "eval_ood"}
    model = moelora.Model(SMALL)
    before = model.expert_sigma()
    result = model.fit(str(data), {**SMALL, "max_epochs": 2, "lr_max": 1e-2})
    assert result["epochs_run"] == 2
    assert all(math.isfinite(e["train_loss"]) for e in result["log"])
    assert max(s for *_, s in model.expert_sigma()) > 0.0
    assert len(before) == 4 * 3
    path = tmp_path / "model.bin"
    model.save(str(path))
    again = moelora.Model.load(str(path))
    frames = clips[0]["frames"]
    assert again.score(frames) == model.score(frames)


def test_grad_check_and_config_errors():
    assert moelora.grad_check(SMALL, seed=1) <= 1e-4
    with pytest.raises(ValueError):
        moelora.Model({"no_such_key": 1})
    with pytest.raises(ValueError):
        moelora.Model(SMALL).score(np.zeros((5, 3)))
    assert "num_experts = 3" in moelora.config_echo({})
