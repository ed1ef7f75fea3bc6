"""Leaky integrate-and-fire dynamics: charge, fire, hard reset.

One simulation step for a layer of neurons with input x and previous
post-reset potential v:

    h = v + (x - (v - v_reset)) / tau          (charge; tau > 1)
    s = 1 if h >= v_th else 0                  (fire; boundary inclusive)
    v' = h * (1 - s) + v_reset * s             (hard reset)

The step function is non-differentiable at the threshold, so the backward
pass substitutes a smooth surrogate derivative g'(h - v_th). The forward
spike values stay exactly binary; the surrogate affects gradients only.
With ``smooth_fire=True`` the forward emits g(h - v_th) itself, which makes
the whole unrolled network differentiable end to end — that mode exists for
gradient checking, not for simulation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .autodiff import DimensionError, Tensor, record_op

SURROGATES = ("arctan", "sigmoid")

# sharpness giving g'(0) = 1 for each family
_DEFAULT_ALPHA = {"arctan": 2.0, "sigmoid": 4.0}


@dataclass(frozen=True)
class LIFParams:
    """Neuron hyperparameters shared by all units of a layer.

    ``grad_through_reset`` lets gradient flow through the spike factor of
    the reset equation; off by default to avoid double-counting the
    surrogate derivative during BPTT.
    """

    tau: float
    v_th: float
    v_reset: float = 0.0
    surrogate: str = "arctan"
    alpha: float | None = None
    grad_through_reset: bool = False

    def __post_init__(self):
        if not self.tau > 1.0:
            raise ValueError(f"tau must be > 1, got {self.tau}")
        if not self.v_th > self.v_reset:
            raise ValueError(f"v_th ({self.v_th}) must exceed v_reset ({self.v_reset})")
        if self.surrogate not in SURROGATES:
            raise ValueError(f"unknown surrogate {self.surrogate!r}, expected one of {SURROGATES}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", _DEFAULT_ALPHA[self.surrogate])
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")

    def with_hyperparams(self, tau=None, v_th=None):
        return replace(
            self,
            tau=self.tau if tau is None else tau,
            v_th=self.v_th if v_th is None else v_th,
        )


@dataclass
class LIFState:
    """Per-neuron membrane state: post-reset v and pre-reset h."""

    v: Tensor
    h: Tensor


def fresh_state(shape, params) -> LIFState:
    """Resting state: every neuron sits at the reset potential."""
    v = Tensor(np.full(shape, params.v_reset, dtype=np.float64))
    return LIFState(v=v, h=Tensor(v.values.copy()))


def surrogate_value_and_grad(x, kind, alpha):
    """Smooth stand-in g for the Heaviside step and its derivative.

    sigmoid: g(x) = sigma(alpha x)
    arctan:  g(x) = arctan(pi alpha x / 2) / pi + 1/2

    Both are normalized so g(0) = 0.5; alpha sets the sharpness.
    """
    if kind not in SURROGATES:
        raise ValueError(f"unknown surrogate {kind!r}")
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    x = np.asarray(x, dtype=np.float64)
    if kind == "sigmoid":
        # tanh form is overflow-safe for large |alpha x|
        value = 0.5 * (1.0 + np.tanh(0.5 * alpha * x))
        deriv = alpha * value * (1.0 - value)
    else:
        u = 0.5 * np.pi * alpha * x
        value = np.arctan(u) / np.pi + 0.5
        deriv = alpha / (2.0 * (1.0 + u * u))
    if value.ndim == 0:
        return float(value), float(deriv)
    return value, deriv


def _surrogate_deriv(x, params):
    return surrogate_value_and_grad(x, params.surrogate, params.alpha)[1]


def lif_charge(v, x, params) -> Tensor:
    """Membrane update h = v + (x - (v - v_reset)) / tau."""
    if v.shape != x.shape:
        raise DimensionError(f"lif_charge: shapes differ: {tuple(v.shape)} vs {tuple(x.shape)}")
    tau, vr = params.tau, params.v_reset
    out = v.values + (x.values - (v.values - vr)) / tau

    def grad(g):
        return g * (1.0 - 1.0 / tau), g / tau

    return record_op(out, (v, x), grad)


def fire(h, params, smooth_fire=False) -> Tensor:
    """Spike decision s = Theta(h - v_th), Theta(0) = 1.

    Backward always uses the surrogate derivative g'(h - v_th).
    """
    diff = h.values - params.v_th
    if smooth_fire:
        out = surrogate_value_and_grad(diff, params.surrogate, params.alpha)[0]
        out = np.asarray(out, dtype=np.float64)
    else:
        out = np.where(diff >= 0.0, 1.0, 0.0)

    def grad(g):
        return (g * _surrogate_deriv(diff, params),)

    return record_op(out, (h,), grad)


def hard_reset(h, s, params) -> Tensor:
    """Post-spike potential v = h*(1-s) + v_reset*s.

    The spike factor is treated as a constant in the backward pass unless
    params.grad_through_reset is set.
    """
    if h.shape != s.shape:
        raise DimensionError(f"hard_reset: shapes differ: {tuple(h.shape)} vs {tuple(s.shape)}")
    vr = params.v_reset
    sv = s.values
    hv = h.values
    out = hv * (1.0 - sv) + vr * sv

    def grad(g):
        gh = g * (1.0 - sv)
        gs = g * (vr - hv) if params.grad_through_reset else None
        return gh, gs

    return record_op(out, (h, s), grad)


def lif_step(state, x, params, smooth_fire=False):
    """One charge -> fire -> reset step; returns (spikes, new state)."""
    h = lif_charge(state.v, x, params)
    s = fire(h, params, smooth_fire=smooth_fire)
    v = hard_reset(h, s, params)
    return s, LIFState(v=v, h=h)
