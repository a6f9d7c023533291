"""Graph analysis and optimization toolchain for deploying image restoration
networks across mobile accelerators.

Typical flow: build a network from the zoo, rewrite operators a device cannot
accelerate, prune channels toward a MAC target, quantize, then estimate
latency per device and measure numeric error against the float reference.
"""
from .errors import PortanetError
from .ir import DataType, Graph, Node, OpKind, QuantScheme, TensorSpec, infer_shapes, validate

__all__ = [
    "DataType",
    "Graph",
    "Node",
    "OpKind",
    "PortanetError",
    "QuantScheme",
    "TensorSpec",
    "infer_shapes",
    "validate",
]

__version__ = "0.1.0"
