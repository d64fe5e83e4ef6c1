"""One-dimensional transition profile of the canonical energy ``|u'|**p + (1 - u**2)**m``.

Along a minimizing 1D profile the first integral ``(p - 1)|u'|**p = W(u)``
holds, so the profile is obtained by quadrature of

    x(u) = (p - 1)**(1/p) * integral_0^u (1 - s**2)**(-m/p) ds

and inverted by reading the samples backwards.  The derivation is in the README.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import quad


def _integrand(s: np.ndarray, p: float, m: float) -> np.ndarray:
    return (p - 1) ** (1 / p) * (1.0 - s * s) ** (-m / p)


def _richardson_midpoint(a: np.ndarray, b: np.ndarray, p: float, m: float) -> np.ndarray:
    """One- and two-point midpoint rules combined to cancel the leading error term."""
    w = b - a
    m1 = w * _integrand(0.5 * (a + b), p, m)
    m2 = 0.5 * w * (_integrand(a + 0.25 * w, p, m) + _integrand(a + 0.75 * w, p, m))
    return (4.0 * m2 - m1) / 3.0


def interval_integrals(u: np.ndarray, p: float, m: float, resolve: float = 0.05) -> np.ndarray:
    """Integral of the profile integrand over each ``[u[i], u[i+1]]``.

    Intervals wider than ``resolve * (1 - u[i+1])`` sit close to the well,
    where the integrand varies on that scale, and are subdivided.
    """
    a, b = u[:-1], u[1:]
    out = _richardson_midpoint(a, b, p, m)
    gap = 1.0 - b
    coarse = np.flatnonzero((b - a) > resolve * gap)
    for i in coarse:
        pieces = int(math.ceil((b[i] - a[i]) / (resolve * gap[i])))
        edges = np.linspace(a[i], b[i], pieces + 1)
        out[i] = np.sum(_richardson_midpoint(edges[:-1], edges[1:], p, m))
    return out


def contact_point(p: float, m: float) -> float:
    """Finite ``x`` where the profile reaches 1; only exists when ``m < p``."""
    if m >= p:
        return math.inf
    alpha = m / p
    # (1 - s^2)^(-alpha) = (1 - s)^(-alpha) (1 + s)^(-alpha); the first factor is the quad weight
    val, _ = quad(lambda s: (1.0 + s) ** (-alpha), 0.0, 1.0, weight="alg", wvar=(0.0, -alpha))
    return (p - 1) ** (1 / p) * val


@dataclass
class Profile1D:
    xs: np.ndarray
    us: np.ndarray
    p: float
    m: float
    u_max: float
    truncated: bool = False
    x_contact: Optional[float] = None

    @property
    def positive(self) -> tuple[np.ndarray, np.ndarray]:
        keep = self.xs >= 0
        return self.xs[keep], self.us[keep]

    def derivative(self) -> np.ndarray:
        """Centered differences on the (nonuniform) sample points; NaN at the ends."""
        du = np.full_like(self.us, np.nan)
        du[1:-1] = (self.us[2:] - self.us[:-2]) / (self.xs[2:] - self.xs[:-2])
        return du

    def residual(self) -> np.ndarray:
        """``|(p - 1)|u'|**p - (1 - u**2)**m|`` at interior samples; NaN elsewhere."""
        du = self.derivative()
        res = np.abs((self.p - 1) * np.abs(du) ** self.p
                     - np.maximum(1.0 - self.us**2, 0.0) ** self.m)
        interior = np.abs(self.us) < 1
        interior[[0, -1]] = False
        # skip samples next to an attached contact point, where the stencil straddles it
        if self.x_contact is not None:
            interior[[1, -2]] = False
        res[~interior] = np.nan
        return res

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "u", "residual"])
        for x, u, r in zip(self.xs, self.us, self.residual()):
            w.writerow([repr(float(x)), repr(float(u)), "" if np.isnan(r) else repr(float(r))])
        return buf.getvalue()


def quadrature_profile(p: float, m: float, u_max: float, du: float,
                       x_budget: float = 1e6) -> Profile1D:
    """Odd monotone profile sampled at ``u = 0, du, 2 du, ..., u_max`` (and mirrored)."""
    if not p > 1:
        raise ValueError("p must exceed 1")
    if not m > 0:
        raise ValueError("m must be positive")
    if not 0 < u_max < 1:
        raise ValueError("u_max must lie in (0, 1)")
    if not du > 0:
        raise ValueError("du must be positive")
    count = int(math.floor(u_max / du + 1e-9))
    u = np.arange(count + 1) * du
    if u[-1] < u_max * (1 - 1e-12):
        u = np.append(u, u_max)
    u[-1] = min(u[-1], u_max)
    x = np.concatenate([[0.0], np.cumsum(interval_integrals(u, p, m))])

    truncated = False
    if x[-1] > x_budget:
        keep = x <= x_budget
        x, u = x[keep], u[keep]
        truncated = True

    x_contact = None
    if m < p and not truncated:
        xc = contact_point(p, m)
        if xc <= x_budget:
            x_contact = xc
            x, u = np.append(x, xc), np.append(u, 1.0)

    xs = np.concatenate([-x[:0:-1], x])
    us = np.concatenate([-u[:0:-1], u])
    return Profile1D(xs, us, p, m, float(u[-1] if x_contact is None else u_max), truncated,
                     x_contact)


@dataclass
class DecayReport:
    kind: str  # polynomial | exponential | finite-interval | undetermined
    exponent: Optional[float] = None
    rate: Optional[float] = None
    rss_polynomial: Optional[float] = None
    rss_exponential: Optional[float] = None
    window: tuple[float, float] = (math.nan, math.nan)
    x_contact: Optional[float] = None
    note: str = ""


def decay_classify(profile: Profile1D, u_tail: float = 0.99, u_reach: float = 0.999,
                   selection_ratio: float = 2.0) -> DecayReport:
    """Classify how the profile approaches the well at +1.

    A profile that attains 1 at a finite point is a finite-interval profile.
    Otherwise ``log(1 - u)`` is fitted against ``log x`` and against ``x`` on
    the last third of the samples with ``u >= u_tail``; the fit whose residual
    sum of squares is smaller by ``selection_ratio`` wins.
    """
    x, u = profile.positive
    if profile.x_contact is not None:
        return DecayReport("finite-interval", x_contact=profile.x_contact,
                           note="profile attains the well at finite x")
    if u.max() < u_reach:
        return DecayReport("undetermined", note=f"profile never reaches u >= {u_reach}")
    tail = np.flatnonzero(u >= u_tail)
    tail = tail[len(tail) - len(tail) // 3:]
    if len(tail) < 5:
        return DecayReport("undetermined", note="tail window too short")
    xt, yt = x[tail], np.log(1.0 - u[tail])

    def fit(t):
        coef, rss, *_ = np.polyfit(t, yt, 1, full=True)
        return coef[0], float(rss[0]) if len(rss) else 0.0

    slope_p, rss_p = fit(np.log(xt))
    slope_e, rss_e = fit(xt)
    report = DecayReport("undetermined", exponent=-slope_p, rate=-slope_e, rss_polynomial=rss_p,
                         rss_exponential=rss_e, window=(float(xt[0]), float(xt[-1])))
    if rss_p * selection_ratio <= rss_e:
        report.kind = "polynomial"
    elif rss_e * selection_ratio <= rss_p:
        report.kind = "exponential"
    else:
        report.note = "residual ratio below selection threshold"
    return report
