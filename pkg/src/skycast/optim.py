"""Training objective and optimizer: log-cosh loss, L2 penalty, Adam.

The loss is log(m * cosh(r - rhat)) averaged over the batch. m only shifts
the value by log m (the gradient is tanh of the error either way) and
defaults to 1. Adam follows the standard bias-corrected update; the learning
rate decays geometrically per epoch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from . import tensor as T
from .errors import NumericError
from .tensor import Array, Parameter, Tensor


@dataclass
class LossConfig:
    m: float = 1.0
    l2_coefficient: float = 0.0

    def __post_init__(self):
        if self.m <= 0.0:
            raise ValueError(f"loss scale m must be positive, got {self.m}")
        if self.l2_coefficient < 0.0:
            raise ValueError(f"l2 coefficient must be >= 0, got {self.l2_coefficient}")


def logcosh_loss(truth: Tensor, prediction: Tensor, cfg: LossConfig | None = None) -> Tensor:
    """Mean of log(m * cosh(truth - prediction)) over all elements.

    Symmetric in the sign of the error and minimized exactly at
    prediction == truth, where it equals log m.
    """
    cfg = cfg or LossConfig()
    err = T.subtract(truth, prediction)
    loss = T.reduce_mean(T.log_cosh(err))
    if cfg.m != 1.0:
        loss = T.add(loss, Tensor(np.log(cfg.m)))
    return loss


def l2_penalty(parameters: Iterable[Parameter], coefficient: float) -> Tensor:
    """coefficient * sum of squared entries over decaying (weight) parameters.

    Bias parameters (decay=False) are excluded.
    """
    if coefficient < 0.0:
        raise ValueError(f"l2 coefficient must be >= 0, got {coefficient}")
    total = Tensor(np.float64(0.0))
    for p in parameters:
        if not p.decay:
            continue
        flat = T.reshape(p.tensor, (p.tensor.size,))
        total = T.add(total, T.reduce_sum(T.multiply(flat, flat)))
    return T.scalar_multiply(total, coefficient)


@dataclass
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    decay: float = 0.95  # learning-rate factor applied per epoch


class Adam:
    """Adam with bias correction over a named parameter set."""

    def __init__(self, parameters: Iterable[Parameter], config: AdamConfig | None = None):
        self.config = config or AdamConfig()
        self.params = list(parameters)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")
        self.m: dict[str, Array] = {p.name: np.zeros_like(p.tensor.data) for p in self.params}
        self.v: dict[str, Array] = {p.name: np.zeros_like(p.tensor.data) for p in self.params}
        self.step_count = 0

    def learning_rate_for_epoch(self, epoch: int) -> float:
        return self.config.learning_rate * self.config.decay ** epoch

    def step(self, gradients: Mapping[str, Array], learning_rate: float | None = None) -> None:
        """One update. Raises NumericError on NaN gradients; missing names
        are treated as zero gradient (the moments still decay)."""
        cfg = self.config
        lr = cfg.learning_rate if learning_rate is None else learning_rate
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - cfg.beta1 ** t
        bc2 = 1.0 - cfg.beta2 ** t
        for p in self.params:
            g = gradients.get(p.name)
            if g is None:
                g = np.zeros_like(p.tensor.data)
            elif np.isnan(g).any():
                raise NumericError(f"NaN gradient for parameter {p.name!r} at step {t}")
            m = self.m[p.name]
            v = self.v[p.name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * np.square(g)
            p.tensor.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.epsilon)
