"""Shared fixtures: tiny architectures and deterministic RNGs."""

from __future__ import annotations

import numpy as np
import pytest

from supwma.model import ArchDescriptor, build_model


def tiny_arch(n_points=4, n_classes=3):
    return ArchDescriptor(
        n_points=n_points,
        encoder_dims=(8, 8, 16),
        classifier_dims=(8, 8),
        projector_dims=(16, 8),
        n_classes=n_classes,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_bundle():
    return build_model(tiny_arch(), seed=7)
