r"""Hankel functions of the first kind for integer order and positive argument.

:math:`J_n` is computed by Miller's backward recurrence normalised with
:math:`J_0 + 2\sum_k J_{2k} = 1`; :math:`Y_0, Y_1` follow from the Neumann
series in the same normalised :math:`J_{2k}` and higher :math:`Y_n` from the
(stable) forward recurrence.  Only the ratios

.. math::
    \alpha_n(t) = H_n^{(1)\prime}(t) / H_n^{(1)}(t), \qquad
    \beta_n(t) = H_n^{(1)\prime\prime}(t) / H_n^{(1)}(t)

enter the elastic DtN matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_ORDER = 64

_EULER_GAMMA = 0.57721566490153286061


class SpecialFunctionError(ValueError):
    """Raised for arguments outside the supported domain."""


@dataclass(frozen=True)
class HankelValue:
    order: int
    argument: float
    h: complex
    dh: complex


def _check(nmax: int, t: float) -> None:
    if not t > 0:
        raise SpecialFunctionError(f"argument must be positive, got t={t!r}")
    if nmax > MAX_ORDER:
        raise SpecialFunctionError(
            f"order {nmax} exceeds the supported maximum {MAX_ORDER}"
        )


def _miller_j(nmax: int, t: float) -> np.ndarray:
    """J_0..J_{nmax+1}(t) by normalised backward recurrence.

    The starting index depends on ``t`` only, so values of a given order do
    not depend on ``nmax``.
    """
    top = max(MAX_ORDER + 1, int(t)) + 30 + int(math.sqrt(40.0 * max(MAX_ORDER + 1, t)))
    top += top % 2
    j = np.zeros(top + 2)
    j[top] = 1e-300
    for k in range(top, 0, -1):
        j[k - 1] = 2.0 * k / t * j[k] - j[k + 1]
        if abs(j[k - 1]) > 1e250:
            j[k - 1 :] *= 1e-250
    norm = j[0] + 2.0 * j[2::2].sum()
    return j[: nmax + 2] / norm, j / norm


def _y01(t: float, jall: np.ndarray) -> tuple[float, float]:
    log_term = math.log(t / 2.0) + _EULER_GAMMA
    kmax = (len(jall) - 2) // 2
    k = np.arange(1, kmax)
    sign = (-1.0) ** k
    y0 = 2.0 / math.pi * (log_term * jall[0] - 2.0 * np.sum(sign * jall[2 * k] / k))
    y1 = 2.0 / math.pi * (
        log_term * jall[1]
        - jall[0] / t
        + np.sum(sign * (jall[2 * k - 1] - jall[2 * k + 1]) / k)
    )
    return y0, y1


def hankel1_orders(nmax: int, t: float) -> np.ndarray:
    """Return ``H_n^(1)(t)`` for ``n = 0 .. nmax + 1`` as a complex array."""
    _check(nmax, t)
    t = float(t)
    j, jall = _miller_j(nmax, t)
    y = np.empty(nmax + 2)
    y[0], y[1] = _y01(t, jall)
    for n in range(1, nmax + 1):
        y[n + 1] = 2.0 * n / t * y[n] - y[n - 1]
    if not np.all(np.isfinite(y)):
        raise SpecialFunctionError(
            f"Y_n overflow for nmax={nmax}, t={t}; argument too small for this order"
        )
    return j + 1j * y


def _reflect(n: int, value: complex) -> complex:
    return value if n >= 0 or n % 2 == 0 else -value


def hankel1(n: int, t: float) -> HankelValue:
    """Hankel function of the first kind and its derivative.

    Negative orders use ``H_{-n} = (-1)^n H_n``.
    """
    m = abs(int(n))
    h = hankel1_orders(m, t)
    dh = -h[1] if m == 0 else h[m - 1] - m / t * h[m]
    return HankelValue(int(n), float(t), _reflect(n, h[m]), _reflect(n, dh))


def alpha_all(nmax: int, t: float) -> np.ndarray:
    """``alpha_n(t)`` for ``n = 0 .. nmax`` (even in ``n``)."""
    h = hankel1_orders(nmax, t)
    n = np.arange(nmax + 1)
    # H_n' = n/t H_n - H_{n+1}
    return n / t - h[1 : nmax + 2] / h[: nmax + 1]


def beta_all(nmax: int, t: float, alpha: np.ndarray | None = None) -> np.ndarray:
    """``beta_n(t) = n^2/t^2 - 1 - alpha_n(t)/t`` for ``n = 0 .. nmax``."""
    if alpha is None:
        alpha = alpha_all(nmax, t)
    n = np.arange(nmax + 1)
    return n**2 / t**2 - 1.0 - alpha / t


def alpha_n(n: int, t: float) -> complex:
    m = abs(int(n))
    return complex(alpha_all(m, t)[m])


def beta_n(n: int, t: float) -> complex:
    m = abs(int(n))
    return complex(beta_all(m, t)[m])
