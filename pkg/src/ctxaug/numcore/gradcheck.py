"""Finite-difference verification of analytic gradients."""
import numpy as np

from .tensor import _topological_order


def numeric_partial(f, flat, k, epsilon, stencil=5):
    """Central-difference estimate of d f / d flat[k]."""
    orig = flat[k]

    def at(delta):
        flat[k] = orig + delta
        value = float(f().data)
        if not np.isfinite(value):
            flat[k] = orig
            raise FloatingPointError("non-finite function value during finite differences")
        return value

    try:
        if stencil == 3:
            return (at(epsilon) - at(-epsilon)) / (2 * epsilon)
        if stencil == 5:
            # pair the symmetric terms first so an insensitive coordinate gives exactly 0
            near = at(epsilon) - at(-epsilon)
            far = at(2 * epsilon) - at(-2 * epsilon)
            return (8 * near - far) / (12 * epsilon)
        raise ValueError("stencil must be 3 or 5")
    finally:
        flat[k] = orig


def grad_check(f, params, epsilon=5e-4, stencil=5):
    """Max relative error between backprop and central differences.

    ``f`` takes no arguments and returns a scalar :class:`Tensor` computed from
    ``params`` (float64 tensors, perturbed in place). The error per coordinate
    is ``|a - n| / max(1e-8, |a| + |n|)``. The default five-point stencil has
    O(epsilon^4) truncation error, which keeps near-zero gradient entries from
    dominating the relative error; ``stencil=3`` gives the classic two-point
    form (use a smaller epsilon with it, e.g. 1e-6).
    """
    for p in params:
        if p.dtype != np.float64:
            raise ValueError("grad_check needs float64 parameters")
    out = f()
    if not np.isfinite(out.data).all():
        raise FloatingPointError("function value is not finite")
    out.backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        if not np.shares_memory(flat, p.data):
            raise ValueError("grad_check needs contiguous parameter arrays")
        a = a.reshape(-1)
        for k in range(flat.size):
            numeric = numeric_partial(f, flat, k, epsilon, stencil)
            err = abs(a[k] - numeric) / max(1e-8, abs(a[k]) + abs(numeric))
            worst = max(worst, err)
    return worst


def kink_margin(output):
    """Smallest distance from any non-smooth op in ``output``'s graph to its kink.

    ReLU reports its smallest ``|input|`` and max-over-time its smallest
    winner/runner-up gap. Finite differences are only meaningful when every
    perturbation stays on one side of these kinks, so callers should reject
    evaluation points whose margin is comparable to the stencil reach.
    Returns ``inf`` for smooth graphs.
    """
    margins = [node._kink() for node in _topological_order(output) if node._kink is not None]
    return min(margins, default=float("inf"))
