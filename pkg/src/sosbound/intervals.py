"""Interval bound propagation: cheap per-node pre/post-activation bounds.

A forward pass in interval arithmetic.  For an affine map the endpoint rule
splits the weights into positive and negative parts; the activation is applied
to the endpoints directly, which is valid because relu, sigmoid and tanh are
all monotone increasing.  The result is sound: every node value reachable from
the input box lies inside its interval.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .model import ACTIVATIONS, Box, NetworkModel


@dataclass(frozen=True)
class LayerBounds:
    """Per-layer boxes: ``pre[k]`` bounds v^k, ``post[k]`` bounds x^{k+1}."""

    input: Box
    pre: Tuple[Box, ...]
    post: Tuple[Box, ...]

    def node_pre(self, layer: int, node: int) -> Tuple[float, float]:
        """Pre-activation interval of hidden layer ``layer`` (1-based), node."""
        box = self.pre[layer - 1]
        return float(box.lo[node]), float(box.hi[node])

    def node_post(self, layer: int, node: int) -> Tuple[float, float]:
        box = self.post[layer - 1]
        return float(box.lo[node]), float(box.hi[node])

    def var_box(self, model: NetworkModel) -> Tuple[np.ndarray, np.ndarray]:
        """Stacked (lo, hi) over the flat variable space (inputs + hidden)."""
        lo = [self.input.lo] + [b.lo for b in self.post]
        hi = [self.input.hi] + [b.hi for b in self.post]
        return np.concatenate(lo), np.concatenate(hi)


def _affine_interval(W: np.ndarray, b: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    Wp = np.maximum(W, 0.0)
    Wn = np.minimum(W, 0.0)
    return Wp @ lo + Wn @ hi + b, Wp @ hi + Wn @ lo + b


def interval_propagate(model: NetworkModel, input_box: Box) -> LayerBounds:
    """Propagate the input box through every layer.

    Returns pre-activation and post-activation boxes for each of the
    ``model.depth`` activation layers.
    """
    if len(input_box) != model.n_u:
        raise ValueError(
            f"input box has dimension {len(input_box)}, model expects {model.n_u}"
        )
    act = ACTIVATIONS[model.activation][0]
    pre_boxes = []
    post_boxes = []
    lo, hi = input_box.lo, input_box.hi
    for W, b in model.layers[:-1]:
        vlo, vhi = _affine_interval(W, b, lo, hi)
        pre_boxes.append(Box(vlo, vhi))
        lo, hi = act(vlo), act(vhi)
        post_boxes.append(Box(lo, hi))
    return LayerBounds(input_box, tuple(pre_boxes), tuple(post_boxes))


def output_interval(model: NetworkModel, bounds: LayerBounds) -> Box:
    """Interval bounds on the affine output from the last hidden box."""
    if bounds.post:
        lo, hi = bounds.post[-1].lo, bounds.post[-1].hi
    else:  # no hidden layers: output is affine in the inputs
        lo, hi = bounds.input.lo, bounds.input.hi
    W, b = model.layers[-1]
    olo, ohi = _affine_interval(W, b, lo, hi)
    return Box(olo, ohi)


def write_interval_csv(bounds: LayerBounds, path: str) -> None:
    """Dump per-node intervals: layer, node, pre_lo, pre_hi, post_lo, post_hi."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", "node", "pre_lo", "pre_hi", "post_lo", "post_hi"])
        for k, (pre, post) in enumerate(zip(bounds.pre, bounds.post), start=1):
            for j in range(len(pre)):
                writer.writerow(
                    [k, j, repr(pre.lo[j]), repr(pre.hi[j]), repr(post.lo[j]), repr(post.hi[j])]
                )
