"""Held-out evaluation of a trained operator against FD ground truth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boundary import compare_to_fd
from .fd import PutPayoff
from .operator import (OperatorModel, SurfaceDataset, predict_surface,
                       predict_values)


@dataclass(frozen=True)
class StrikeMetrics:
    strike: float
    held_out: bool
    rel_l2_error: float
    boundary_max_nodes: int
    negative_fraction: float

    def to_json_dict(self) -> dict:
        return {"strike": self.strike, "held_out": self.held_out,
                "rel_l2_error": self.rel_l2_error,
                "boundary_max_nodes": self.boundary_max_nodes,
                "negative_fraction": self.negative_fraction}


def strike_metrics(model: OperatorModel, dataset: SurfaceDataset,
                   strike: float) -> StrikeMetrics:
    payoff = PutPayoff(strike)
    fd_surface = dataset.surfaces[strike]
    raw = predict_values(model, payoff, dataset.grid)
    rel = float(np.linalg.norm(raw - fd_surface.values)
                / np.linalg.norm(fd_surface.values))
    neg = float((raw < 0.0).mean())
    pred = predict_surface(model, payoff, dataset.grid)
    _, _, dist = compare_to_fd(fd_surface, pred, payoff)
    return StrikeMetrics(strike, strike in dataset.test_strikes, rel,
                         int(dist.max()), neg)


def evaluate_model(model: OperatorModel,
                   dataset: SurfaceDataset) -> list[StrikeMetrics]:
    return [strike_metrics(model, dataset, k) for k in dataset.strikes]
