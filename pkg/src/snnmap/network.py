"""Spiking architectures and their temporal forward pass.

A network is an ordered stack of LIF layers (linear or convolutional
synapses feeding LIF units). Inference runs the whole stack for T steps
with fresh membrane state per call, reads out the mean firing rate of the
output layer, and can record every layer's binary spike trains.

Running under an active gradient tape makes the same code path trainable
(BPTT through all T steps); without a tape it is plain numpy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .autodiff import DimensionError, Tensor, add, conv2d, matmul, reshape, scale
from .container import load_container, save_container
from .encoding import InputSequence
from .neuron import LIFParams, fresh_state, lif_step
from .util import subrng


@dataclass(frozen=True)
class LinearSpec:
    in_features: int
    out_features: int
    lif: LIFParams

    kind = "linear"

    def state_shape(self, batch):
        return (batch, self.out_features)

    @property
    def neuron_count(self):
        return self.out_features

    def weight_shape(self):
        return (self.in_features, self.out_features)

    def fan_in(self):
        return self.in_features


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int
    padding: int
    in_hw: tuple
    lif: LIFParams

    kind = "conv"

    @property
    def out_hw(self):
        return kernels.conv_output_hw(
            self.in_hw[0], self.in_hw[1], self.kernel_size, self.kernel_size,
            self.stride, self.padding,
        )

    def state_shape(self, batch):
        ho, wo = self.out_hw
        return (batch, self.out_channels, ho, wo)

    @property
    def neuron_count(self):
        ho, wo = self.out_hw
        return self.out_channels * ho * wo

    def weight_shape(self):
        return (self.out_channels, self.in_channels, self.kernel_size, self.kernel_size)

    def fan_in(self):
        return self.in_channels * self.kernel_size * self.kernel_size


# a layer spec is either of the above; both expose the same surface
LayerSpec = (LinearSpec, ConvSpec)


@dataclass
class SpikeRecord:
    """Binary spike trains for one sample: one [T, neurons] array per layer."""

    layers: list

    def layer_names(self):
        return [f"layer{i}" for i in range(len(self.layers))]


def count_spikes(record: SpikeRecord) -> int:
    """Total number of spikes across all layers and timesteps."""
    return int(sum(float(arr.sum()) for arr in record.layers))


@dataclass
class ForwardResult:
    rates: np.ndarray
    record: Optional[SpikeRecord]
    spike_count: int


class Network:
    """Immutable-during-inference stack of LIF layers plus weights."""

    def __init__(self, specs, weights, input_shape, t_steps):
        if len(specs) != len(weights):
            raise ValueError("one weight tensor per layer spec required")
        for spec, w in zip(specs, weights):
            if tuple(w.shape) != spec.weight_shape():
                raise DimensionError(
                    f"weight shape {tuple(w.shape)} does not match spec {spec.weight_shape()}"
                )
            if not np.isfinite(w.values).all():
                raise ValueError("network weights must be finite")
        self.specs = list(specs)
        self.weights = list(weights)
        self.input_shape = tuple(input_shape)
        self.t_steps = int(t_steps)

    @property
    def classes(self):
        return self.specs[-1].neuron_count

    def parameters(self):
        return self.weights

    def zero_grad(self):
        for w in self.weights:
            w.zero_grad()

    def get_weights(self):
        return [w.values.copy() for w in self.weights]

    def set_weights(self, values):
        for w, v in zip(self.weights, values):
            if w.values.shape != v.shape:
                raise DimensionError(f"weight shape mismatch: {w.values.shape} vs {v.shape}")
            w.values = v.copy()

    def with_hyperparams(self, tau=None, v_th=None):
        """Same weights, re-parameterized neurons (used by post-hoc sweeps)."""
        specs = []
        for spec in self.specs:
            lif = spec.lif.with_hyperparams(tau=tau, v_th=v_th)
            if spec.kind == "linear":
                specs.append(LinearSpec(spec.in_features, spec.out_features, lif))
            else:
                specs.append(
                    ConvSpec(spec.in_channels, spec.out_channels, spec.kernel_size,
                             spec.stride, spec.padding, spec.in_hw, lif)
                )
        clone = Network(specs, [Tensor(w.values.copy(), requires_grad=True) for w in self.weights],
                        self.input_shape, self.t_steps)
        return clone


def _init_weight(spec, rng):
    bound = np.sqrt(6.0 / spec.fan_in())
    return Tensor(rng.uniform(-bound, bound, size=spec.weight_shape()), requires_grad=True)


def build_mlpsnn(input_dim, hidden_dims, classes, lif, t_steps=10, seed=0) -> Network:
    """Fully connected LIF stack; two hidden widths give the standard 3-layer net."""
    widths = [int(input_dim)] + [int(d) for d in hidden_dims] + [int(classes)]
    if min(widths) < 1:
        raise ValueError(f"layer widths must be positive, got {widths}")
    specs = [LinearSpec(widths[i], widths[i + 1], lif) for i in range(len(widths) - 1)]
    weights = [_init_weight(spec, subrng(seed, "init", i)) for i, spec in enumerate(specs)]
    return Network(specs, weights, (input_dim,), t_steps)


def build_cnnsnn(input_geometry, channel_plan, hidden_dim, classes, lif,
                 t_steps=10, kernel_size=3, stride=2, padding=1, seed=0) -> Network:
    """Three conv-LIF layers then two linear LIF layers."""
    c, h, w = input_geometry
    specs = []
    in_c, hw = int(c), (int(h), int(w))
    for out_c in channel_plan:
        spec = ConvSpec(in_c, int(out_c), kernel_size, stride, padding, hw, lif)
        ho, wo = spec.out_hw
        if ho < 1 or wo < 1:
            raise DimensionError(
                f"conv stack does not compose: {hw} with kernel {kernel_size}, "
                f"stride {stride}, padding {padding} gives {ho}x{wo}"
            )
        specs.append(spec)
        in_c, hw = spec.out_channels, (ho, wo)
    flat = specs[-1].neuron_count
    specs.append(LinearSpec(flat, int(hidden_dim), lif))
    specs.append(LinearSpec(int(hidden_dim), int(classes), lif))
    weights = [_init_weight(spec, subrng(seed, "init", i)) for i, spec in enumerate(specs)]
    return Network(specs, weights, (int(c), int(h), int(w)), t_steps)


def run_network(net, frames, smooth_fire=False, record_spikes=False):
    """Drive the stack with [T, B, *geometry] frames.

    Returns (rates Tensor [B, classes], per-layer spike arrays or None,
    total spike count as float). Membrane state is created fresh here, so
    repeated calls never leak state across samples.
    """
    if frames.shape[2:] != net.input_shape:
        raise DimensionError(
            f"input geometry {frames.shape[2:]} does not match network "
            f"input {net.input_shape}"
        )
    t_steps, batch = frames.shape[0], frames.shape[1]
    states = [fresh_state(spec.state_shape(batch), spec.lif) for spec in net.specs]
    recs = [[] for _ in net.specs] if record_spikes else None
    out_acc = None
    spike_total = 0.0
    for t in range(t_steps):
        x = Tensor(frames[t])
        for li, (spec, w) in enumerate(zip(net.specs, net.weights)):
            if spec.kind == "linear":
                if x.ndim != 2:
                    x = reshape(x, (batch, -1))
                drive = matmul(x, w)
            else:
                drive = conv2d(x, w, stride=spec.stride, padding=spec.padding)
            s, states[li] = lif_step(states[li], drive, spec.lif, smooth_fire=smooth_fire)
            if record_spikes:
                recs[li].append(s.values)
            spike_total += float(s.values.sum())
            x = s
        out_acc = x if out_acc is None else add(out_acc, x)
    rates = scale(out_acc, 1.0 / t_steps)
    return rates, recs, spike_total


def forward(net, input_seq, record=False) -> ForwardResult:
    """Single-sample inference: rates, optional SpikeRecord, spike count."""
    frames = input_seq.frames if isinstance(input_seq, InputSequence) else np.asarray(input_seq)
    rates, recs, total = run_network(net, frames[:, None], record_spikes=record)
    rec = None
    if record:
        rec = SpikeRecord([np.stack(r).reshape(len(r), -1) for r in recs])
    return ForwardResult(rates=rates.values[0].copy(), record=rec, spike_count=int(round(total)))


def network_from_spec(spec, tau, v_th, seed=0) -> Network:
    """Build from a plain dict (the sweep/CLI description of an architecture).

    Keys: arch {mlpsnn,cnnsnn}, t_steps, classes, surrogate/alpha/v_reset,
    plus input_dim/hidden_dims (mlp) or input_geometry/channel_plan/
    hidden_dim (cnn).
    """
    lif = LIFParams(
        tau=tau,
        v_th=v_th,
        v_reset=spec.get("v_reset", 0.0),
        surrogate=spec.get("surrogate", "arctan"),
        alpha=spec.get("alpha"),
    )
    t_steps = spec.get("t_steps", 10)
    if spec["arch"] == "mlpsnn":
        return build_mlpsnn(
            spec["input_dim"], spec["hidden_dims"], spec["classes"], lif,
            t_steps=t_steps, seed=seed,
        )
    if spec["arch"] == "cnnsnn":
        return build_cnnsnn(
            tuple(spec["input_geometry"]), spec["channel_plan"], spec["hidden_dim"],
            spec["classes"], lif, t_steps=t_steps,
            kernel_size=spec.get("kernel_size", 3),
            stride=spec.get("stride", 2),
            padding=spec.get("padding", 1),
            seed=seed,
        )
    raise ValueError(f"unknown architecture {spec.get('arch')!r}")


# ---------------------------------------------------------------------------
# checkpoint container


def _lif_to_dict(lif):
    return {
        "tau": lif.tau,
        "v_th": lif.v_th,
        "v_reset": lif.v_reset,
        "surrogate": lif.surrogate,
        "alpha": lif.alpha,
        "grad_through_reset": lif.grad_through_reset,
    }


def _lif_from_dict(d):
    return LIFParams(**d)


def _spec_to_dict(spec):
    if spec.kind == "linear":
        return {
            "kind": "linear",
            "in_features": spec.in_features,
            "out_features": spec.out_features,
            "lif": _lif_to_dict(spec.lif),
        }
    return {
        "kind": "conv",
        "in_channels": spec.in_channels,
        "out_channels": spec.out_channels,
        "kernel_size": spec.kernel_size,
        "stride": spec.stride,
        "padding": spec.padding,
        "in_hw": list(spec.in_hw),
        "lif": _lif_to_dict(spec.lif),
    }


def _spec_from_dict(d):
    lif = _lif_from_dict(d["lif"])
    if d["kind"] == "linear":
        return LinearSpec(d["in_features"], d["out_features"], lif)
    return ConvSpec(
        d["in_channels"], d["out_channels"], d["kernel_size"],
        d["stride"], d["padding"], tuple(d["in_hw"]), lif,
    )


def save_checkpoint(net, path):
    meta = {
        "kind": "network",
        "t_steps": net.t_steps,
        "input_shape": list(net.input_shape),
        "layers": [_spec_to_dict(spec) for spec in net.specs],
    }
    arrays = {f"layer{i}.weight": w.values for i, w in enumerate(net.weights)}
    save_container(path, meta, arrays)


def load_checkpoint(path) -> Network:
    meta, arrays = load_container(path)
    if meta.get("kind") != "network":
        raise ValueError(f"{path}: container does not hold a network checkpoint")
    specs = [_spec_from_dict(d) for d in meta["layers"]]
    weights = [
        Tensor(arrays[f"layer{i}.weight"], requires_grad=True) for i in range(len(specs))
    ]
    return Network(specs, weights, tuple(meta["input_shape"]), meta["t_steps"])
