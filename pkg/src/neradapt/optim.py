"""Adam with named parameter groups and per-group learning rates.

The two-rate training scheme assigns every trainable tensor to exactly
one group ("base" or "adapt") and steps each group at its own rate; a
rate of 0 leaves the group's tensors bitwise untouched (moments
included), which is what makes the frozen variants exact freezes.
"""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor

GROUP_BASE = "base"
GROUP_ADAPT = "adapt"


@dataclass
class ParameterGroup:
    name: str
    parameters: list
    learning_rate: float

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError(f"group {self.name!r}: learning rate must be >= 0")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def clip_gradients(parameters, max_norm):
    """Rescale gradients in place so their global L2 norm is <= max_norm.

    Direction is preserved (single scalar rescale).  Returns the
    pre-clip norm.
    """
    total = 0.0
    for p in parameters:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    norm = float(np.sqrt(total))
    if max_norm and norm > max_norm:
        factor = max_norm / norm
        for p in parameters:
            if p.grad is not None:
                p.grad *= factor
    return norm


@dataclass
class Adam:
    groups: list
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 5.0
    states: dict = field(default_factory=dict)

    def __post_init__(self):
        seen = {}
        for g in self.groups:
            for p in g.parameters:
                if not isinstance(p, Tensor) or not p.requires_grad:
                    raise ValueError(f"group {g.name!r} holds a non-trainable entry")
                if id(p) in seen:
                    raise ValueError(
                        f"parameter {p.name!r} appears in groups {seen[id(p)]!r} and {g.name!r}")
                seen[id(p)] = g.name

    def _state(self, p):
        st = self.states.get(id(p))
        if st is None:
            st = AdamState(np.zeros_like(p.data), np.zeros_like(p.data))
            self.states[id(p)] = st
        return st

    def step(self, active=None):
        """One Adam update over the active groups (all groups by default).

        Gradients are clipped globally across the stepped parameters,
        then cleared.  Zero-rate groups are skipped entirely but still
        get their gradients cleared.
        """
        groups = [g for g in self.groups if active is None or g.name in active]
        stepped = [p for g in groups if g.learning_rate > 0 for p in g.parameters]
        clip_gradients(stepped, self.clip_norm)
        for g in groups:
            if g.learning_rate == 0.0:
                for p in g.parameters:
                    p.grad = None
                continue
            for p in g.parameters:
                st = self._state(p)
                g_arr = p.grad if p.grad is not None else np.zeros_like(p.data)
                st.t += 1
                st.m = self.beta1 * st.m + (1.0 - self.beta1) * g_arr
                st.v = self.beta2 * st.v + (1.0 - self.beta2) * g_arr * g_arr
                m_hat = st.m / (1.0 - self.beta1 ** st.t)
                v_hat = st.v / (1.0 - self.beta2 ** st.t)
                p.data -= g.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
                p.grad = None

    def zero_grad(self):
        for g in self.groups:
            for p in g.parameters:
                p.grad = None
