import numpy as np
import pytest

from sosbound.model import Box, NetworkModel


@pytest.fixture
def identity_relu():
    """1-in 1-out ReLU net computing ReLU(u): W0=[[1]], b0=[0], affine identity out."""
    return NetworkModel(
        ((np.array([[1.0]]), np.array([0.0])), (np.array([[1.0]]), np.array([0.0]))),
        "relu",
    )


@pytest.fixture
def unit_box():
    return Box(np.array([-1.0]), np.array([1.0]))


def chain_net(weights, biases, activation):
    """Single-node-per-layer net from scalar weight/bias lists (incl. output)."""
    layers = tuple(
        (np.array([[float(w)]]), np.array([float(b)]))
        for w, b in zip(weights, biases)
    )
    return NetworkModel(layers, activation)
