"""snnmap: spiking neural networks with operational-manifold mapping.

A small, self-contained engine: float64 tensors with a reverse-mode tape,
leaky integrate-and-fire layers trained by surrogate-gradient BPTT, a
(tau, v_th) grid-sweep harness with an accuracy/spike-efficiency readout,
and a frame-noise robustness protocol with spike-train correlation
statistics.
"""

__version__ = "0.1.0"

from .autodiff import Tape, Tensor
from .neuron import LIFParams, LIFState
from .network import Network, build_cnnsnn, build_mlpsnn

__all__ = [
    "Tape",
    "Tensor",
    "LIFParams",
    "LIFState",
    "Network",
    "build_mlpsnn",
    "build_cnnsnn",
    "__version__",
]
