"""Closed-form Huber calculus and the proximity operators built on it.

All functions act on the trailing axis: ``t`` may be a single 2-vector or an
array of shape ``(..., 2)``; matrix-valued results have shape ``(..., 2, 2)``.
The Newton derivative uses the ball branch on the interface
``|t| = gamma + epsilon``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "HuberParams",
    "ProxPair",
    "HuberProx",
    "ObstacleProx",
    "huber_value",
    "huber_gradient",
    "prox_huber",
    "prox_newton_derivative",
    "jacobian_algebra",
    "prox_huber_conjugate",
    "prox_obstacle",
    "huber_newton_derivative",
]


@dataclass(frozen=True)
class HuberParams:
    epsilon: float
    gamma: float

    def __post_init__(self):
        if not (self.epsilon > 0 and self.gamma > 0):
            raise ValueError("epsilon and gamma must be positive")


def _norm(t):
    return np.linalg.norm(t, axis=-1)


def huber_value(t, epsilon):
    """``min(|t| - eps/2, |t|^2 / (2 eps))``."""
    s = _norm(np.asarray(t, dtype=float))
    return np.where(s <= epsilon, s * s / (2.0 * epsilon), s - 0.5 * epsilon)


def huber_gradient(t, epsilon):
    t = np.asarray(t, dtype=float)
    s = _norm(t)
    return t / np.maximum(s, epsilon)[..., None]


def prox_huber(t, params: HuberParams):
    """Resolvent ``(id + gamma D|.|_eps)^{-1}``: a radial shrinkage of ``t``."""
    t = np.asarray(t, dtype=float)
    eps, gamma = params.epsilon, params.gamma
    s = _norm(t)
    with np.errstate(divide="ignore"):
        shrink = np.where(s > 0, 1.0 - gamma / np.where(s > 0, s, 1.0), -np.inf)
    factor = np.maximum(eps / (eps + gamma), shrink)
    return factor[..., None] * t


def _projector_perp(t, s):
    """``1 - t t^T / |t|^2``; the identity where ``t = 0``."""
    safe = np.where(s > 0, s, 1.0)
    unit = t / safe[..., None]
    eye = np.broadcast_to(np.eye(2), t.shape[:-1] + (2, 2))
    return eye - unit[..., :, None] * unit[..., None, :]


def prox_newton_derivative(t, params: HuberParams):
    t = np.asarray(t, dtype=float)
    eps, gamma = params.epsilon, params.gamma
    s = _norm(t)
    outside = s > gamma + eps
    eye = np.broadcast_to(np.eye(2), t.shape[:-1] + (2, 2))
    ball = (eps / (eps + gamma)) * eye
    coef = np.where(outside, gamma / np.where(outside, s, 1.0), 0.0)
    linear = eye - coef[..., None, None] * _projector_perp(t, s)
    return np.where(outside[..., None, None], linear, ball)


def jacobian_algebra(t, params: HuberParams):
    """Closed forms of ``J^{-1}`` and ``J^{-1} (1 - J)`` for ``J = prox_newton_derivative(t)``."""
    t = np.asarray(t, dtype=float)
    eps, gamma = params.epsilon, params.gamma
    s = _norm(t)
    outside = s > gamma + eps
    eye = np.broadcast_to(np.eye(2), t.shape[:-1] + (2, 2))
    P = _projector_perp(t, s)
    c = np.where(outside, gamma / np.where(outside, s - gamma, 1.0), 0.0)[..., None, None]
    inv = np.where(outside[..., None, None], eye + c * P, ((eps + gamma) / eps) * eye)
    inv_compl = np.where(outside[..., None, None], c * P, (gamma / eps) * eye)
    return inv, inv_compl


def prox_huber_conjugate(t, sigma, epsilon):
    """prox of ``sigma * (I_{|y|<=1} + eps/2 |y|^2)``: scale, then project onto the unit ball."""
    y = np.asarray(t, dtype=float) / (1.0 + sigma * epsilon)
    s = _norm(y)
    return y / np.maximum(s, 1.0)[..., None]


def prox_obstacle(s, gamma2, f):
    """prox of ``gamma2 * (I_{[0, inf)}(y) - f y)``."""
    return np.maximum(0.0, np.asarray(s, dtype=float) + gamma2 * np.asarray(f, dtype=float))


def huber_newton_derivative(t, epsilon):
    """Newton derivative of ``huber_gradient``: ``1/eps`` inside, ``P_t / |t|`` outside."""
    t = np.asarray(t, dtype=float)
    s = _norm(t)
    inside = s < epsilon
    eye = np.broadcast_to(np.eye(2), t.shape[:-1] + (2, 2))
    outer = _projector_perp(t, s) / np.where(inside, 1.0, s)[..., None, None]
    return np.where(inside[..., None, None], eye / epsilon, outer)


class ProxPair:
    """A convex density together with its proximal calculus.

    Subclasses provide ``value``, ``gradient``, ``prox``, ``newton_derivative``
    and ``conjugate_prox``.
    """

    def value(self, t):
        raise NotImplementedError

    def gradient(self, t):
        raise NotImplementedError

    def prox(self, t):
        raise NotImplementedError

    def newton_derivative(self, t):
        raise NotImplementedError

    def conjugate_prox(self, sigma, t):
        raise NotImplementedError

    def moreau_residual(self, t, gamma):
        """``t - (gamma prox_{phi*/gamma}(t/gamma) + prox_{gamma phi}(t))``; zero by Moreau's identity."""
        return t - (gamma * self.conjugate_prox(1.0 / gamma, np.asarray(t) / gamma)
                    + self.prox_with(gamma, t))

    def prox_with(self, gamma, t):
        raise NotImplementedError


class HuberProx(ProxPair):
    def __init__(self, params: HuberParams):
        self.params = params

    def value(self, t):
        return huber_value(t, self.params.epsilon)

    def gradient(self, t):
        return huber_gradient(t, self.params.epsilon)

    def prox(self, t):
        return prox_huber(t, self.params)

    def prox_with(self, gamma, t):
        return prox_huber(t, HuberParams(self.params.epsilon, gamma))

    def newton_derivative(self, t):
        return prox_newton_derivative(t, self.params)

    def conjugate_prox(self, sigma, t):
        return prox_huber_conjugate(t, sigma, self.params.epsilon)


class ObstacleProx(ProxPair):
    """The 1-D density ``I_{[0, inf)}(s) - f s`` with a fixed load ``f``."""

    def __init__(self, f, gamma2: float = 1.0):
        self.f = f
        self.gamma2 = gamma2

    def value(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s >= 0.0, -self.f * s, np.inf)

    def gradient(self, s):
        return np.where(np.asarray(s) > 0.0, -self.f, np.nan)

    def prox(self, s):
        return prox_obstacle(s, self.gamma2, self.f)

    def prox_with(self, gamma, s):
        return prox_obstacle(s, gamma, self.f)

    def newton_derivative(self, s):
        return (np.asarray(s) + self.gamma2 * self.f > 0.0).astype(float)

    def conjugate_prox(self, sigma, s):
        # psi*(w) = I_{(-inf, 0]}(w + f): project s onto w <= -f
        return np.minimum(np.asarray(s, dtype=float), -self.f)
