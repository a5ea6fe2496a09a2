"""AdamW with decoupled weight decay, exponential LR decay, and global-norm
gradient clipping. Moments are kept per parameter name so checkpoints can
serialize and restore them exactly; each parameter carries its own update
count for bias correction, which keeps late-unfrozen parameters from
inheriting a stale correction."""

from __future__ import annotations

import numpy as np

from .autodiff import Parameter
from .errors import NumericError


def decay_lr(base_lr: float, gamma: float, step: int) -> float:
    """lr at a given global step: base_lr * gamma**step, exact in f64."""
    return float(base_lr * gamma**step)


def clip_gradients(params: list[Parameter], threshold: float) -> float:
    """Global-norm clip across every live gradient; returns the pre-clip norm.

    If the joint L2 norm exceeds the threshold, every gradient is scaled by
    threshold/norm in place, so no individual entry ever grows.
    """
    total = 0.0
    for p in params:
        if p.frozen or p.grad is None:
            continue
        g = p.grad
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {p.name}")
        total += float(np.dot(g.reshape(-1), g.reshape(-1)))
    norm = float(np.sqrt(total))
    if norm > threshold:
        scale = threshold / norm
        for p in params:
            if p.frozen or p.grad is None:
                continue
            g = p.grad
            np.multiply(g, np.asarray(scale, dtype=g.dtype), out=g)
    return norm


class AdamW:
    """Decoupled-weight-decay Adam over named parameters.

    Update per parameter (t is that parameter's own step count):
        m <- b1*m + (1-b1)*g        v <- b2*v + (1-b2)*g^2
        p <- p - lr*(mhat/(sqrt(vhat)+eps) + wd*p)
    Frozen parameters and parameters without a gradient are skipped and
    their moments left untouched.
    """

    def __init__(
        self,
        params: list[Parameter],
        beta1: float = 0.8,
        beta2: float = 0.99,
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise NumericError("AdamW: duplicate parameter names")
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t: dict[str, int] = {}

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self, lr_t: float) -> None:
        b1, b2 = self.beta1, self.beta2
        for p in self.params:
            if p.frozen or p.grad is None:
                continue
            g = p.grad
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient in {p.name}")
            name = p.name
            if name not in self.m:
                self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
                self.t[name] = 0
            self.t[name] += 1
            t = self.t[name]
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            mhat = m / (1.0 - b1**t)
            vhat = v / (1.0 - b2**t)
            update = lr_t * (mhat / (np.sqrt(vhat) + self.eps) + self.weight_decay * p.data)
            p.data -= update.astype(p.data.dtype, copy=False)
