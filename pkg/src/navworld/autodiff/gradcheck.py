"""Central-finite-difference gradient oracle.

Compares reverse-mode gradients against (f(x+eps) - f(x-eps)) / (2 eps)
elementwise over all supplied parameters. Run in float64 mode.
"""

from __future__ import annotations

import numpy as np

from .nn import Parameter


class NonFiniteValue(RuntimeError):
    pass


def grad_check(f, params: list[Parameter], eps: float = 1e-5) -> float:
    """Max over parameter elements of |analytic - central diff| / max(1, |central diff|).

    ``f`` must be a deterministic scalar-valued function of the parameters
    (called with no arguments). Frozen parameters get analytic gradient 0.
    """
    for p in params:
        p.zero_grad()
    loss = f()
    loss.backward()
    analytic = {}
    for p in params:
        g = p.grad if (p.grad is not None and not p.frozen) else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise NonFiniteValue(f"non-finite analytic gradient for {p.name!r}")
        analytic[id(p)] = g.copy()

    max_err = 0.0
    for p in params:
        if p.frozen:
            continue
        flat = p.data.reshape(-1)
        ana = analytic[id(p)].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = f().item()
            flat[i] = orig - eps
            f_minus = f().item()
            flat[i] = orig
            cd = (f_plus - f_minus) / (2.0 * eps)
            if not np.isfinite(cd):
                raise NonFiniteValue(f"non-finite central difference for {p.name!r}[{i}]")
            err = abs(ana[i] - cd) / max(1.0, abs(cd))
            if err > max_err:
                max_err = err
    return max_err
