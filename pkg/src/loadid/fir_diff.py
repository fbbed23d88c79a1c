"""Constrained FIR differentiators of orders 1 to 4.

A differentiator of order ``p`` with ``N = 2M + 1`` taps computes

    y[n] = h**-p * sum_k c_k * (x[n+k] - x[n-k])              (p odd)
    y[n] = h**-p * sum_k c_k * (x[n+k] + x[n-k] - 2 x[n])     (p even)

so that its response approximates ``(j w)**p`` near ``w = 0`` and vanishes
at ``w = pi``. The side coefficients ``c_k`` come from a square linear
system solved in exact rational arithmetic:

* tangency at DC: the Taylor moments ``2 sum c_k k**q`` of the response
  equal ``p!`` for ``q = p`` and zero for the lower moments of the same
  parity;
* a boundary condition at ``w = pi``: ``H(pi) = 0`` for even orders, and the
  flat zero ``H'(pi) = 0`` (``sum c_k k (-1)**k = 0``) for odd orders, whose
  ``H(pi)`` is already zero by antisymmetry;
* the remaining degrees of freedom zero the next higher moments
  (maximal flatness at DC).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy

from .errors import InsufficientTaps, SignalTooShort, SingularDesign
from .signals import MeasurementFrame, Waveform

DEFAULT_TAPS = 21
MAX_ORDER = 4


@dataclass(frozen=True)
class FirDifferentiator:
    order: int
    taps: int
    side: tuple[float, ...]
    center: float

    @property
    def half_length(self) -> int:
        return (self.taps - 1) // 2

    @property
    def antisymmetric(self) -> bool:
        return self.order % 2 == 1

    def impulse(self) -> np.ndarray:
        """Full tap vector ``t`` with ``y[n] = sum_m t[m] x[n - M + m]``."""
        m = self.half_length
        c = np.asarray(self.side)
        full = np.zeros(self.taps)
        full[m + 1 :] = c
        full[:m] = (-c if self.antisymmetric else c)[::-1]
        full[m] = self.center
        return full

    def constraint_residuals(self) -> dict[str, float]:
        """Residuals of the design equations evaluated with the float taps.

        Moment conditions of high degree are reported relative to the sum of
        the magnitudes of their terms.
        """
        k = np.arange(1, self.half_length + 1, dtype=float)
        c = np.asarray(self.side)
        p = self.order
        out = {}
        for q in _moment_degrees(p, self.half_length):
            terms = 2 * c * k**q
            target = math.factorial(p) if q == p else 0.0
            res = terms.sum() - target
            if q > p:
                res /= np.abs(terms).sum()
            out[f"moment_{q}"] = float(res)
        if self.antisymmetric:
            out["flat_zero_at_pi"] = float(np.sum(c * k * (-1.0) ** k))
        else:
            out["dc"] = float(self.center + 2 * c.sum())
            out["zero_at_pi"] = float(self.center + 2 * np.sum(c * (-1.0) ** k))
        return out


def _moment_degrees(p: int, m: int) -> list[int]:
    """Moment degrees constrained for order ``p`` with ``m`` side taps."""
    unknowns = m if p % 2 else m + 1
    fixed = 1 if p % 2 else 2  # boundary (+ DC for even orders)
    start = 1 if p % 2 else 2
    return list(range(start, start + 2 * (unknowns - fixed), 2))


@lru_cache(maxsize=None)
def design_differentiator(order: int, taps: int = DEFAULT_TAPS) -> FirDifferentiator:
    """Design an order-``order`` differentiator with ``taps`` coefficients."""
    if order not in range(1, MAX_ORDER + 1):
        raise InsufficientTaps(f"derivative order must be 1..{MAX_ORDER}, got {order}")
    if taps % 2 == 0 or taps < 2 * order + 3:
        raise InsufficientTaps(
            f"order {order} needs an odd tap count >= {2 * order + 3}, got {taps}"
        )
    m = (taps - 1) // 2
    ks = range(1, m + 1)
    rows, rhs = [], []
    odd = order % 2 == 1
    if odd:
        rows.append([k * (-1) ** k for k in ks])
        rhs.append(0)
    else:
        rows.append([1] + [2 * (-1) ** k for k in ks])
        rhs.append(0)
        rows.append([1] + [2] * m)
        rhs.append(0)
    for q in _moment_degrees(order, m):
        row = [2 * k**q for k in ks]
        rows.append(row if odd else [0] + row)
        rhs.append(math.factorial(order) if q == order else 0)
    a = sympy.Matrix(rows)
    if a.rank() < a.rows:
        raise SingularDesign(f"constraint system for order {order}, {taps} taps is singular")
    sol = a.LUsolve(sympy.Matrix(rhs))
    if odd:
        center, side = 0.0, [float(x) for x in sol]
    else:
        center, side = float(sol[0]), [float(x) for x in sol[1:]]
    return FirDifferentiator(order=order, taps=taps, side=tuple(side), center=center)


def frequency_response(f: FirDifferentiator, omegas) -> np.ndarray:
    """Transfer function of the tap set at radian frequencies ``omegas``.

    Even orders are evaluated as ``-4 sum c_k sin(k w / 2)**2``, which equals
    ``c_0 + 2 sum c_k cos(k w)`` under the DC condition but keeps full
    relative precision where the response is tiny.
    """
    w = np.asarray(omegas, dtype=float)
    c = np.asarray(f.side)
    k = np.arange(1, f.half_length + 1)
    kw = np.multiply.outer(w, k)
    if f.antisymmetric:
        return 2j * (np.sin(kw) @ c)
    return (-4.0 * (np.sin(kw / 2) ** 2 @ c)).astype(complex)


def differentiate(f: FirDifferentiator, w: Waveform) -> Waveform:
    """Apply ``f`` to ``w``, scaled by ``1 / h**p``.

    The first and last ``M`` outputs have no full window and are set to 0;
    callers exclude them through a stack's ``valid_range``.
    """
    x = w.samples
    n, m = x.size, f.half_length
    if n <= f.taps:
        raise SignalTooShort(f"need more than {f.taps} samples, got {n}")
    mid = x[m : n - m]
    acc = np.zeros(n - 2 * m)
    for k, ck in enumerate(f.side, start=1):
        ahead = x[m + k : n - m + k]
        behind = x[m - k : n - m - k]
        if f.antisymmetric:
            acc += ck * (ahead - behind)
        else:
            acc += ck * ((ahead - mid) + (behind - mid))
    out = np.zeros(n)
    out[m : n - m] = acc / w.sample_interval_s**f.order
    return w.with_samples(out)


@dataclass(frozen=True)
class DerivativeStack:
    """A signal with its numerical derivatives of orders 1..4.

    ``derivatives[k - 1]`` holds the order-``k`` derivative or ``None`` when
    it was not computed. Samples outside ``valid_range`` (a half-open index
    interval) are edge fill and carry no information.
    """

    base: Waveform
    derivatives: tuple
    valid_range: tuple[int, int]

    def __len__(self) -> int:
        return len(self.base)

    @property
    def max_order(self) -> int:
        return max((k + 1 for k, d in enumerate(self.derivatives) if d is not None), default=0)

    def get(self, order: int) -> np.ndarray:
        """Samples of the order-``order`` derivative (0 is the base signal)."""
        if order == 0:
            return self.base.samples
        d = self.derivatives[order - 1] if order <= len(self.derivatives) else None
        if d is None:
            raise KeyError(f"derivative of order {order} was not computed")
        return d.samples

    @property
    def d1(self):
        return self.derivatives[0]

    @property
    def d2(self):
        return self.derivatives[1]

    @property
    def d3(self):
        return self.derivatives[2]

    @property
    def d4(self):
        return self.derivatives[3]

    def valid_mask(self) -> np.ndarray:
        mask = np.zeros(len(self), dtype=bool)
        mask[slice(*self.valid_range)] = True
        return mask


def derivative_stack(w: Waveform, max_order: int, taps: int = DEFAULT_TAPS) -> DerivativeStack:
    if max_order not in range(1, MAX_ORDER + 1):
        raise ValueError(f"max_order must be 1..{MAX_ORDER}, got {max_order}")
    if len(w) <= taps:
        raise SignalTooShort(f"need more than {taps} samples, got {len(w)}")
    derivs = [
        differentiate(design_differentiator(p, taps), w) if p <= max_order else None
        for p in range(1, MAX_ORDER + 1)
    ]
    m = (taps - 1) // 2
    return DerivativeStack(w, tuple(derivs), (m, len(w) - m))


def build_stack(
    frame: MeasurementFrame, max_order: int, taps: int = DEFAULT_TAPS
) -> tuple[DerivativeStack, DerivativeStack]:
    """Derivative stacks for the voltage and current of ``frame``."""
    return (
        derivative_stack(frame.voltage, max_order, taps),
        derivative_stack(frame.current, max_order, taps),
    )
