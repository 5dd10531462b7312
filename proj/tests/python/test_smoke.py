# Copyright 2026 The meetdiar Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import itertools
import os
import subprocess

import numpy as np
import pytest

import meetdiar


def test_features_shape():
    rng = np.random.default_rng(0)
    audio = 0.1 * rng.standard_normal(16000 * 3)
    mel = meetdiar.log_mel(audio)
    assert mel.shape == (300, 64)
    feats = meetdiar.compute_features(audio)
    assert feats.shape == (30, 64 * 21)
    assert np.all(np.isfinite(feats))


def test_median_filter_removes_spike():
    x = np.zeros(11)
    x[5] = 1.0
    assert np.all(meetdiar.median_filter(x, 3) == 0.0)


def test_postprocess_and_der():
    probs = np.array([[0.9, 0.9, 0.1, 0.8], [0.2, 0.6, 0.75, 0.1]])
    hyp = meetdiar.postprocess(probs, threshold=0.7, median_len=1)
    assert hyp.tolist() == [[1, 1, 0, 1], [0, 0, 1, 0]]
    r = meetdiar.der(hyp, hyp)
    assert r["der"] == 0.0
    swapped = hyp[::-1].copy()
    assert meetdiar.der(hyp, swapped)["der"] == 0.0
    empty = np.zeros_like(hyp)
    assert meetdiar.der(hyp, empty)["der"] == 1.0


def test_pit_matches_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(20):
        s = int(rng.integers(2, 5))
        y = (rng.random((s, 7)) < 0.5).astype(np.uint8)
        p = rng.uniform(0.05, 0.95, (s, 7))
        loss, perm = meetdiar.pit_loss(p, y)
        best = min(
            -np.sum(y * np.log(p[list(q)]) + (1 - y) * np.log(1 - p[list(q)]))
            for q in itertools.permutations(range(s)))
        assert loss == pytest.approx(best, abs=1e-10)
        assert sorted(perm) == list(range(s))


def test_rttm_round_trip():
    y = np.array([[0, 1, 1, 0, 0], [1, 1, 0, 0, 1]], dtype=np.uint8)
    text = meetdiar.rttm_write(y, "m1", slot_to_speaker=[4, 0])
    assert "spk4" in text and "slot1" in text
    back = meetdiar.rttm_read(text, 2, 5)
    assert np.array_equal(back, y)


def test_errors_are_python_exceptions():
    with pytest.raises(ValueError):
        meetdiar.der(np.zeros((2, 5)), np.zeros((2, 6)))
    with pytest.raises(ValueError):
        meetdiar.median_filter(np.zeros(5), 2)


def test_selfcheck_passes():
    results = meetdiar.selfcheck()
    assert results
    for name, passed, detail in results:
        assert passed, (name, detail)


@pytest.mark.skipif("MEETDIAR_CLI" not in os.environ, reason="CLI path not set")
def test_model_from_checkpoint(tmp_path):
    cli = os.environ["MEETDIAR_CLI"]
    corpus = tmp_path / "corpus"
    run = tmp_path / "run"
    subprocess.run([cli, "synth-corpus", "--speakers", "4", "--utterances", "2",
                    "--seed", "5", str(corpus)], check=True)
    subprocess.run([cli, "train", "--corpus", str(corpus), "--sa-dim", "8",
                    "--heads", "2", "--repeats", "1", "--dilation-layers", "2",
                    "--sa-layers", "1", "--slots", "2", "--steps", "0",
                    str(run)], check=True)
    model = meetdiar.Model(str(run / "checkpoint-00000000.mdt"))
    assert model.step == 0
    feats = np.random.default_rng(1).standard_normal((25, 64 * 21))
    probs = model.infer(feats)
    assert probs.shape == (2, 25)
    assert np.all((probs > 0) & (probs < 1))
    assert np.array_equal(probs, model.infer(feats))
