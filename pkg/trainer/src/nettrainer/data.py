"""Deterministic synthetic image-classification data.

Each class gets a fixed smooth template image; samples are the template
plus Gaussian noise. The task is easy enough that a working backbone
separates the classes within a few epochs, and everything derives from
the profile seed so repeated runs see identical tensors.
"""

from __future__ import annotations

import torch

from .profile import TrainProfile


def _class_templates(num_classes: int, channels: int, size: int,
                     generator: torch.Generator) -> torch.Tensor:
    """Low-frequency per-class template images in roughly [-1, 1]."""
    coarse = torch.randn(num_classes, channels, 4, 4, generator=generator)
    templates = torch.nn.functional.interpolate(
        coarse, size=(size, size), mode="bilinear", align_corners=False)
    return templates / templates.abs().amax(dim=(1, 2, 3), keepdim=True)


def _make_split(templates: torch.Tensor, count: int, noise: float,
                generator: torch.Generator) -> tuple[torch.Tensor, torch.Tensor]:
    num_classes = templates.shape[0]
    labels = torch.randint(num_classes, (count,), generator=generator)
    images = templates[labels] + noise * torch.randn(
        count, *templates.shape[1:], generator=generator)
    return images, labels


class SyntheticDataset:
    """Train/val/test splits with train-time flip and pad-crop augmentation."""

    def __init__(self, profile: TrainProfile, channels: int = 3, noise: float = 0.5):
        generator = torch.Generator().manual_seed(profile.seed * 1_000_003 + 11)
        templates = _class_templates(profile.num_classes, channels,
                                     profile.crop_size, generator)
        n_train = max(1, int(profile.n_train * profile.subset_fraction))
        self.train = _make_split(templates, n_train, noise, generator)
        self.val = _make_split(templates, profile.n_val, noise, generator)
        self.test = _make_split(templates, profile.n_test, noise, generator)
        self.profile = profile

    def augment(self, images: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
        profile = self.profile
        flip = torch.rand(images.shape[0], generator=generator) < profile.flip_p
        images = torch.where(flip[:, None, None, None], images.flip(-1), images)
        pad = profile.crop_padding
        if pad:
            padded = torch.nn.functional.pad(images, (pad, pad, pad, pad))
            offsets = torch.randint(2 * pad + 1, (images.shape[0], 2), generator=generator)
            size = profile.crop_size
            images = torch.stack([
                padded[i, :, y:y + size, x:x + size]
                for i, (y, x) in enumerate(offsets.tolist())])
        return images

    def train_batches(self, epoch: int):
        profile = self.profile
        generator = torch.Generator().manual_seed(
            profile.seed * 1_000_003 + 31 * (epoch + 1))
        images, labels = self.train
        order = torch.randperm(images.shape[0], generator=generator)
        for start in range(0, images.shape[0], profile.batch_size):
            idx = order[start:start + profile.batch_size]
            yield self.augment(images[idx], generator), labels[idx]

    def eval_batches(self, split: tuple[torch.Tensor, torch.Tensor]):
        images, labels = split
        for start in range(0, images.shape[0], self.profile.batch_size):
            yield images[start:start + self.profile.batch_size], \
                labels[start:start + self.profile.batch_size]
