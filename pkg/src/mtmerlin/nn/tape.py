"""Minimal reverse-mode recorder for the estimator's fixed operation set."""
from __future__ import annotations

import numpy as np

from ..errors import StaleTape


class Tape:
    """Operation graph of one forward pass.

    Variables are integer ids. Each node stores its input ids, output id and a
    closure mapping the output cotangent (plus a per-input "needed" mask) to
    input cotangents. Only variables that depend on a parameter are tracked.
    """

    def __init__(self, params):
        self.params = params
        self.params_version = params.version
        self.nodes = []
        self.param_vars = {}
        self.tracked = set()
        self.output = None
        self.output_shape = None
        self._next = 0

    def _new(self):
        v = self._next
        self._next += 1
        return v

    def data(self):
        return self._new()

    def param(self, key):
        v = self._new()
        self.param_vars[v] = key
        self.tracked.add(v)
        return v

    def add(self, op, inputs, backward):
        out = self._new()
        need = [v in self.tracked for v in inputs]
        if any(need):
            self.tracked.add(out)
            self.nodes.append((op, tuple(inputs), out, tuple(need), backward))
        return out


def backward(tape: Tape, upstream):
    """Gradients of sum(upstream * output) w.r.t. every parameter tensor."""
    if tape.params.version != tape.params_version:
        raise StaleTape("parameters changed since this forward pass")
    upstream = np.asarray(upstream, dtype=tape.params.dtype)
    if upstream.shape != tape.output_shape:
        upstream = upstream.reshape(tape.output_shape)
    grads = {tape.output: upstream}
    visited = set()
    for op, ins, out, need, bwd in reversed(tape.nodes):
        g = grads.pop(out, None)
        if g is None:
            continue
        assert out not in visited
        visited.add(out)
        for v, gi in zip(ins, bwd(g, need)):
            if gi is None:
                continue
            if v in grads:
                grads[v] = grads[v] + gi
            else:
                grads[v] = gi
    out = {}
    for v, key in tape.param_vars.items():
        g = grads.get(v)
        out[key] = np.zeros_like(tape.params.tensors[key]) if g is None else g
    return out
