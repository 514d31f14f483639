"""Fixed-step explicit Runge-Kutta integration."""
import numpy as np


def rk4(rhs, y0, t0, h, n_steps, h_state=None):
    """Integrate ``dy/dt = rhs(t, y)`` with ``n_steps`` classical RK4 steps.

    ``t0`` and ``h`` may be arrays when a batch of independent problems with
    different step sizes is advanced together; ``h_state`` is ``h`` reshaped to
    broadcast against ``y`` (defaults to ``h`` itself). ``rhs`` may return a
    fresh array or reuse its own buffer; its result is consumed before the next call.
    """
    y = np.array(y0, copy=True)
    t0 = np.asarray(t0, dtype=float)
    h = np.asarray(h, dtype=float)
    hy = h if h_state is None else h_state
    half, sixth = 0.5 * hy, hy / 6.0
    acc = np.empty_like(y)
    tmp = np.empty_like(y)
    for step in range(n_steps):
        t = t0 + step * h
        k = rhs(t, y)
        np.copyto(acc, k)
        np.multiply(k, half, out=tmp)
        tmp += y
        k = rhs(t + 0.5 * h, tmp)
        acc += 2.0 * k
        np.multiply(k, half, out=tmp)
        tmp += y
        k = rhs(t + 0.5 * h, tmp)
        acc += 2.0 * k
        np.multiply(k, hy, out=tmp)
        tmp += y
        k = rhs(t + h, tmp)
        acc += k
        acc *= sixth
        y += acc
    return y
