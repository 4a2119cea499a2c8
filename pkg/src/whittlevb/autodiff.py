"""Forward-mode differentiation with exact gradients and Hessians.

The workhorse is :class:`D2`, an array-valued second-order dual number.
A ``D2`` carries a value block of arbitrary (broadcastable) shape, a
gradient block with one extra trailing axis of length ``p`` (the number
of differentiation directions), and optionally a Hessian block with two
extra trailing axes. All arithmetic broadcasts with numpy semantics, so
a whole batch of Monte Carlo samples crossed with a block of frequencies
can be differentiated in a handful of vectorised operations.

Complex intermediate quantities (spectral matrix entries) are carried in
complex dtype; derivatives with respect to real parameters commute with
taking real parts and conjugation, so ``.real`` and :func:`conj` are
linear operations on the blocks.

Passing ``h=None`` turns off second-order propagation, which roughly
halves the cost when only gradients are needed (e.g. inside HMC).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "D2",
    "SecondOrderNumber",
    "seed",
    "seed_batch",
    "grad_hess",
    "fd_grad_hess",
    "exp",
    "log",
    "sqrt",
    "tanh",
    "atanh",
    "sin",
    "cos",
    "creal",
    "conj",
]


def _app1(c):
    """Append one broadcast axis to an array constant (no-op on scalars)."""
    c = np.asarray(c)
    return c if c.ndim == 0 else c[..., None]


def _app2(c):
    c = np.asarray(c)
    return c if c.ndim == 0 else c[..., None, None]


class D2:
    """Array-valued dual number: value ``v``, gradient ``g``, Hessian ``h``.

    ``v.shape == V``, ``g.shape`` broadcastable to ``V + (p,)`` and
    ``h.shape`` broadcastable to ``V + (p, p)``. ``h is None`` means
    first-order-only propagation.
    """

    __slots__ = ("v", "g", "h")

    # make `ndarray <op> D2` dispatch to our reflected methods instead of
    # numpy broadcasting D2 objects elementwise
    __array_ufunc__ = None

    def __init__(self, v, g, h=None):
        self.v = np.asarray(v)
        self.g = np.asarray(g)
        self.h = None if h is None else np.asarray(h)

    @property
    def p(self) -> int:
        return self.g.shape[-1]

    # -- arithmetic -------------------------------------------------------

    def __neg__(self):
        return D2(-self.v, -self.g, None if self.h is None else -self.h)

    def __add__(self, other):
        if isinstance(other, D2):
            h = None
            if self.h is not None and other.h is not None:
                h = self.h + other.h
            return D2(self.v + other.v, self.g + other.g, h)
        return D2(self.v + other, self.g, self.h)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, D2):
            return self + (-other)
        return D2(self.v - other, self.g, self.h)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, D2):
            v = self.v * other.v
            g = self.g * _app1(other.v) + other.g * _app1(self.v)
            h = None
            if self.h is not None and other.h is not None:
                cross = (
                    self.g[..., :, None] * other.g[..., None, :]
                )
                h = (
                    self.h * _app2(other.v)
                    + other.h * _app2(self.v)
                    + cross
                    + np.swapaxes(cross, -1, -2)
                )
            return D2(v, g, h)
        return D2(
            self.v * other,
            self.g * _app1(other),
            None if self.h is None else self.h * _app2(other),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, D2):
            return self * other._reciprocal()
        inv = 1.0 / np.asarray(other)
        return self * inv

    def __rtruediv__(self, other):
        return self._reciprocal() * other

    def _reciprocal(self):
        inv = 1.0 / self.v
        return self._elem(inv, -inv * inv, 2.0 * inv * inv * inv)

    # -- elementary functions --------------------------------------------

    def _elem(self, f0, d1, d2):
        """Chain rule for a scalar elementary function with derivatives d1, d2."""
        g = _app1(d1) * self.g
        h = None
        if self.h is not None:
            outer = self.g[..., :, None] * self.g[..., None, :]
            h = _app2(d1) * self.h + _app2(d2) * outer
        return D2(f0, g, h)

    def exp(self):
        e = np.exp(self.v)
        return self._elem(e, e, e)

    def log(self):
        inv = 1.0 / self.v
        return self._elem(np.log(self.v), inv, -inv * inv)

    def sqrt(self):
        s = np.sqrt(self.v)
        d1 = 0.5 / s
        return self._elem(s, d1, -0.5 * d1 / s)

    def tanh(self):
        t = np.tanh(self.v)
        sech2 = 1.0 - t * t
        return self._elem(t, sech2, -2.0 * t * sech2)

    def atanh(self):
        d1 = 1.0 / (1.0 - self.v * self.v)
        return self._elem(np.arctanh(self.v), d1, 2.0 * self.v * d1 * d1)

    def sin(self):
        s, c = np.sin(self.v), np.cos(self.v)
        return self._elem(s, c, -s)

    def cos(self):
        s, c = np.sin(self.v), np.cos(self.v)
        return self._elem(c, -s, -c)

    # -- structural operations -------------------------------------------

    @property
    def real(self):
        return D2(
            self.v.real,
            self.g.real,
            None if self.h is None else self.h.real,
        )

    def conj(self):
        return D2(
            np.conj(self.v),
            np.conj(self.g),
            None if self.h is None else np.conj(self.h),
        )

    def sum(self, axis=None):
        if axis is None:
            axes = tuple(range(self.v.ndim))
        else:
            axes = (axis % max(self.v.ndim, 1),)
        # Gradient/Hessian blocks may rely on broadcasting along value axes;
        # expand before reducing so the sums are correct.
        g = np.broadcast_to(self.g, self.v.shape + self.g.shape[-1:])
        h = self.h
        if h is not None:
            h = np.broadcast_to(h, self.v.shape + h.shape[-2:])
            h = h.sum(axis=axes)
        return D2(self.v.sum(axis=axes), g.sum(axis=axes), h)

    def __repr__(self):  # pragma: no cover
        return f"D2(v={self.v!r})"


# -- dispatch helpers (work on D2 and on plain numerics) ------------------


def exp(x):
    return x.exp() if isinstance(x, D2) else np.exp(x)


def log(x):
    return x.log() if isinstance(x, D2) else np.log(x)


def sqrt(x):
    return x.sqrt() if isinstance(x, D2) else np.sqrt(x)


def tanh(x):
    return x.tanh() if isinstance(x, D2) else np.tanh(x)


def atanh(x):
    return x.atanh() if isinstance(x, D2) else np.arctanh(x)


def sin(x):
    return x.sin() if isinstance(x, D2) else np.sin(x)


def cos(x):
    return x.cos() if isinstance(x, D2) else np.cos(x)


def creal(x):
    return x.real if isinstance(x, D2) else np.real(x)


def conj(x):
    return x.conj() if isinstance(x, D2) else np.conj(x)


# -- seeding --------------------------------------------------------------


def seed(theta: Sequence[float], order: int = 2) -> list[D2]:
    """Seed a parameter vector for differentiation in all p directions."""
    theta = np.asarray(theta, dtype=float)
    p = theta.shape[0]
    zero_h = np.zeros((p, p)) if order == 2 else None
    out = []
    for j in range(p):
        g = np.zeros(p)
        g[j] = 1.0
        out.append(D2(theta[j], g, zero_h))
    return out


def seed_batch(thetas: np.ndarray, order: int = 2) -> list[D2]:
    """Seed a batch of parameter vectors.

    ``thetas`` has shape (S, p). Component j becomes a D2 with value block
    of shape (S, 1); the trailing singleton axis leaves room for a
    frequency axis to broadcast into.
    """
    thetas = np.asarray(thetas, dtype=float)
    S, p = thetas.shape
    zero_h = np.zeros((1, 1, p, p)) if order == 2 else None
    out = []
    for j in range(p):
        g = np.zeros((1, 1, p))
        g[..., j] = 1.0
        out.append(D2(thetas[:, j : j + 1], g, zero_h))
    return out


# -- public results and oracles -------------------------------------------


@dataclass
class SecondOrderNumber:
    """Value, gradient and symmetric Hessian of a scalar function."""

    value: float
    grad: np.ndarray
    hess: np.ndarray


def grad_hess(f: Callable, theta: Sequence[float]) -> SecondOrderNumber:
    """Exact value/gradient/Hessian of ``f`` at ``theta`` by forward-mode AD.

    ``f`` receives a list of per-component differentiable numbers and must
    be built from the supported arithmetic and elementary operations.
    """
    out = f(seed(theta))
    v = np.asarray(out.v, dtype=float)
    h = 0.5 * (out.h + np.swapaxes(out.h, -1, -2))
    res = SecondOrderNumber(float(v), np.asarray(out.g, dtype=float), h)
    if not (
        np.isfinite(res.value)
        and np.all(np.isfinite(res.grad))
        and np.all(np.isfinite(res.hess))
    ):
        raise FloatingPointError("non-finite derivative evaluation")
    return res


def fd_grad_hess(f: Callable, theta: Sequence[float], h: float = 1e-5) -> SecondOrderNumber:
    """Central finite-difference oracle for gradients and Hessians.

    ``f`` is called with plain float lists. Used for cross-checking only;
    the inference path never touches this.
    """
    if h <= 0:
        raise ValueError("finite-difference step h must be positive")
    theta = np.asarray(theta, dtype=float)
    p = theta.shape[0]

    def ev(delta):
        val = float(f(list(theta + delta)))
        if not np.isfinite(val):
            raise FloatingPointError("non-finite function evaluation")
        return val

    f0 = ev(np.zeros(p))
    grad = np.zeros(p)
    hess = np.zeros((p, p))
    for i in range(p):
        ei = np.zeros(p)
        ei[i] = h
        fp, fm = ev(ei), ev(-ei)
        grad[i] = (fp - fm) / (2 * h)
        hess[i, i] = (fp - 2 * f0 + fm) / (h * h)
    for i in range(p):
        for j in range(i + 1, p):
            ei = np.zeros(p)
            ej = np.zeros(p)
            ei[i] = h
            ej[j] = h
            val = (
                ev(ei + ej) - ev(ei - ej) - ev(-ei + ej) + ev(-ei - ej)
            ) / (4 * h * h)
            hess[i, j] = hess[j, i] = val
    return SecondOrderNumber(f0, grad, 0.5 * (hess + hess.T))
