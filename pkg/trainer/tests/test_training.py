"""Training behavior under the desk profile."""

import json
import time

import pytest

from archeng.codegen import MacroConfig, assemble, emit
from helpers import cell_block, downsample_block, stem_block
from nettrainer import TrainProfile, desk_profile, train_eval
from nettrainer.train import _cosine_lr


def resnet_network(width=16):
    net = assemble(cell_block(0), stem_block(), downsample_block(),
                   MacroConfig(), width)
    return json.loads(dict(emit(net))["network.json"])


def test_desk_training_learns():
    started = time.monotonic()
    result = train_eval(resnet_network(), desk_profile())
    assert result["status"] == "ok"
    assert result["epochs_run"] == 3
    losses = result["train_losses"]
    assert losses[-1] <= 0.8 * losses[0], losses
    assert result["accuracy_test"] > 0.2
    assert result["accuracy_val"] > 0.2
    elapsed = time.monotonic() - started
    assert elapsed < 600, f"took {elapsed:.1f}s"
    print(f"PASS desk-training-learns: {elapsed:.2f}s (limit 600s)")


def test_training_is_seed_deterministic():
    profile = TrainProfile(epochs=1, batch_size=128, n_train=512, n_val=256,
                           n_test=256, seed=888)
    network = resnet_network()
    first = train_eval(network, profile)
    second = train_eval(network, profile)
    assert first == second


def test_untrained_accuracy_is_near_chance():
    profile = TrainProfile(epochs=1, lr=0.0, weight_decay=0.0, batch_size=128,
                           n_train=128, n_val=1000, n_test=1000, seed=999)
    result = train_eval(resnet_network(), profile)
    assert result["status"] in ("ok", "diverged")
    if result["status"] == "ok":
        assert result["accuracy_test"] == pytest.approx(0.10, abs=0.05)


def test_cosine_schedule_endpoints():
    profile = desk_profile()
    assert _cosine_lr(profile, 0) == pytest.approx(profile.lr)
    assert _cosine_lr(profile, profile.epochs) == pytest.approx(profile.end_lr)
    mid = _cosine_lr(profile, 1)
    assert profile.end_lr < mid < profile.lr


def test_profile_validation():
    with pytest.raises(ValueError, match="epochs"):
        TrainProfile(epochs=0)
    with pytest.raises(ValueError, match="subset_fraction"):
        TrainProfile(subset_fraction=0.0)
    with pytest.raises(ValueError, match="optimizer"):
        TrainProfile(optimizer="adam")


def test_profile_round_trip(tmp_path):
    profile = desk_profile(seed=888)
    path = tmp_path / "profile.json"
    path.write_text(json.dumps(profile.to_dict()))
    assert TrainProfile.load(path) == profile
