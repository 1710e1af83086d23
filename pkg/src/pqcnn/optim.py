"""Nadam updates and mini-batch scheduling."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class NadamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **hyper) -> "NadamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **hyper)

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        arrays = {f"m{i}": a for i, a in enumerate(self.m)}
        arrays.update({f"v{i}": a for i, a in enumerate(self.v)})
        hyper = np.array([self.lr, self.beta1, self.beta2, self.eps, self.t], dtype=np.float64)
        np.savez(buf, hyper=hyper, **arrays)
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "NadamState":
        with np.load(io.BytesIO(data)) as z:
            lr, b1, b2, eps, t = z["hyper"]
            n = sum(1 for k in z.files if k.startswith("m"))
            return cls(
                lr=float(lr), beta1=float(b1), beta2=float(b2), eps=float(eps), t=int(t),
                m=[z[f"m{i}"].copy() for i in range(n)],
                v=[z[f"v{i}"].copy() for i in range(n)],
            )


def nadam_step(params, grads, state: NadamState) -> None:
    """One in-place Nadam update of every array in ``params``.

    Bias-corrected Nesterov form: the look-ahead mixes the corrected first
    moment with the current gradient, both rescaled by ``1 - beta1**t``.
    Non-finite gradients abort the step before anything is modified.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state must align")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError("non-finite gradient; update skipped")

    state.t += 1
    b1, b2, t = state.beta1, state.beta2, state.t
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / c1
        v_hat = v / c2
        p -= state.lr * (b1 * m_hat + (1.0 - b1) * g / c1) / (np.sqrt(v_hat) + state.eps)


def make_batches(indices, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffle ``indices`` and cut into consecutive batches; the last may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    perm = rng.permutation(np.asarray(indices))
    return [perm[i : i + batch_size] for i in range(0, len(perm), batch_size)]
