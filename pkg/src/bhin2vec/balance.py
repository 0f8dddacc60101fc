"""Turning training ratios into a transition-matrix update.

The matrix is pulled toward the powers of the uniform matrix, shifted per
hop by alpha times the centered ratio tensor, with an exact gradient and a
projection back onto the row-stochastic support.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .skipgram import RatioTensor
from .walker import StochasticMatrix


@dataclass
class PerturbationConfig:
    alpha: float  # perturbation strength, >= 0
    lr: float  # step size for the matrix update, > 0
    window: int  # number of hop slices consumed from the ratio tensor

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.lr <= 0:
            raise ValueError("matrix learning rate must be > 0")
        if self.window < 1:
            raise ValueError("window must be >= 1")


def _check_shapes(matrix: StochasticMatrix, uniform: StochasticMatrix,
                  ratios: RatioTensor, cfg: PerturbationConfig) -> None:
    n = matrix.type_count
    if uniform.values.shape != (n, n):
        raise ShapeMismatch("matrix and uniform matrix differ in size")
    if not np.array_equal(matrix.support, uniform.support):
        raise ShapeMismatch("matrix and uniform matrix have different supports")
    if ratios.values.shape != (cfg.window, n, n):
        raise ShapeMismatch(
            f"ratio tensor shape {ratios.values.shape} does not match "
            f"window {cfg.window} over {n} types"
        )


def _powers(values: np.ndarray, up_to: int) -> list[np.ndarray]:
    out = [np.eye(len(values))]
    for _ in range(up_to):
        out.append(out[-1] @ values)
    return out


def stochastic_loss(matrix: StochasticMatrix, uniform: StochasticMatrix,
                    ratios: RatioTensor, cfg: PerturbationConfig) -> float:
    """Sum over hops of the squared Frobenius distance between the matrix
    power and the perturbed uniform power."""
    _check_shapes(matrix, uniform, ratios, cfg)
    p_pow = _powers(matrix.values, cfg.window)
    u_pow = _powers(uniform.values, cfg.window)
    total = 0.0
    for hop in range(cfg.window):
        target = u_pow[hop + 1] + cfg.alpha * (ratios.values[hop] - 1.0)
        diff = p_pow[hop + 1] - target
        total += float(np.sum(diff * diff))
    return total


def stochastic_loss_gradient(matrix: StochasticMatrix, uniform: StochasticMatrix,
                             ratios: RatioTensor, cfg: PerturbationConfig) -> np.ndarray:
    """Exact gradient of the perturbation loss with respect to the matrix.

    Matrix powers are differentiated with the product rule
    d(P^n) = sum_{a+b=n-1} P^a dP P^b. Entries outside the support are
    zeroed, since they are fixed at zero.
    """
    _check_shapes(matrix, uniform, ratios, cfg)
    p_pow = _powers(matrix.values, cfg.window)
    u_pow = _powers(uniform.values, cfg.window)
    grad = np.zeros_like(matrix.values)
    for hop in range(cfg.window):
        target = u_pow[hop + 1] + cfg.alpha * (ratios.values[hop] - 1.0)
        diff = p_pow[hop + 1] - target
        for a in range(hop + 1):
            grad += 2.0 * p_pow[a].T @ diff @ p_pow[hop - a].T
    grad[~matrix.support] = 0.0
    return grad


def apply_stochastic_update(matrix: StochasticMatrix, grad: np.ndarray,
                            cfg: PerturbationConfig) -> StochasticMatrix:
    """One projected descent step: mask to the support, clip to [0, 1],
    renormalize each row; a row whose mass clips away falls back to uniform
    over its support."""
    values = matrix.values - cfg.lr * grad
    values[~matrix.support] = 0.0
    np.clip(values, 0.0, 1.0, out=values)
    sums = values.sum(axis=1)
    degenerate = sums <= 0.0
    if degenerate.any():
        fallback = matrix.support[degenerate] / matrix.support[degenerate].sum(
            axis=1, keepdims=True
        )
        values[degenerate] = fallback
        sums = values.sum(axis=1)
    values /= sums[:, None]
    updated = StochasticMatrix(values=values, support=matrix.support)
    updated.validate()
    return updated
