"""Train a graph model under a profile and report accuracies.

The result dict is the output half of the contract:
{"accuracy_val", "accuracy_test", "status", "epochs_run"} plus a
"reason" when status is "failed".
"""

from __future__ import annotations

import math

import torch

from .data import SyntheticDataset
from .model import GraphModel, build_model
from .profile import TrainProfile


def _cosine_lr(profile: TrainProfile, epoch: int) -> float:
    if profile.schedule == "constant":
        return profile.lr
    span = profile.lr - profile.end_lr
    return profile.end_lr + 0.5 * span * (1 + math.cos(math.pi * epoch / profile.epochs))


@torch.no_grad()
def _accuracy(model: GraphModel, dataset: SyntheticDataset, split) -> float:
    model.eval()
    correct = total = 0
    for images, labels in dataset.eval_batches(split):
        predictions = model(images).argmax(dim=-1)
        correct += (predictions == labels).sum().item()
        total += labels.shape[0]
    return correct / total


def train_eval(network: dict, profile: TrainProfile) -> dict:
    torch.manual_seed(profile.seed)
    model = build_model(network)
    dataset = SyntheticDataset(profile)

    optimizer = torch.optim.SGD(model.parameters(), lr=profile.lr,
                                momentum=profile.momentum,
                                nesterov=profile.nesterov,
                                weight_decay=profile.weight_decay)
    loss_fn = torch.nn.CrossEntropyLoss()

    epoch_losses: list[float] = []
    for epoch in range(profile.epochs):
        lr = _cosine_lr(profile, epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr
        model.train()
        total_loss = 0.0
        batches = 0
        for images, labels in dataset.train_batches(epoch):
            optimizer.zero_grad()
            loss = loss_fn(model(images), labels)
            if not torch.isfinite(loss):
                return {"accuracy_val": 0.0, "accuracy_test": 0.0,
                        "status": "failed", "reason": "non-finite training loss",
                        "epochs_run": epoch}
            loss.backward()
            optimizer.step()
            total_loss += loss.item()
            batches += 1
        epoch_losses.append(total_loss / max(1, batches))
        if len(epoch_losses) >= 3 and epoch_losses[2] > epoch_losses[0]:
            return {"accuracy_val": 0.0, "accuracy_test": 0.0,
                    "status": "diverged", "epochs_run": epoch + 1,
                    "train_losses": epoch_losses}

    return {"accuracy_val": _accuracy(model, dataset, dataset.val),
            "accuracy_test": _accuracy(model, dataset, dataset.test),
            "status": "ok", "epochs_run": profile.epochs,
            "train_losses": epoch_losses}
