"""Transience/recurrence classification of the occupancy states.

``k0`` is the smallest ``k`` for which

    I_k = int_0^inf m(t)**k * exp(-lam * m(t)) dt

diverges, and the almost-sure liminf of the queue length equals ``k0``.
States below ``k0`` are transient, states from ``k0`` on are recurrent.

The authoritative route is :func:`classify_symbolic`, which decides each
``I_k`` exactly from a certified two-term profile
``m(t) = L ln t + beta ln ln t + O(1)``.  :func:`classify_numeric` evaluates
partial integrals over doubling horizons and only reports suspicions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .laws import AsymptoticProfile, ServiceLaw
from .quadrature import (DEFAULT_PANEL_BUDGET, DEFAULT_REL_TOL, divergence_suspected,
                         integrate_finite)

RECURRENT = "Recurrent"
TRANSIENT = "Transient"
MIXED = "Mixed"

DEFAULT_K_MAX = 8
FIRST_DOUBLING = 10
LAST_DOUBLING = 60


class ProfileNotCertified(ValueError):
    """The law's profile cannot support an exact decision; use classify_numeric."""


@dataclass
class Verdict:
    k: int
    # True / False, or None when undecided.
    divergent: Optional[bool]
    # "symbolic", "divergence-suspected", "convergent-suspected", "inconclusive"
    label: str
    partial_integral_trace: Optional[list[tuple[float, float]]] = None

    def to_dict(self) -> dict:
        d = {"k": self.k, "divergent": self.divergent, "label": self.label}
        if self.partial_integral_trace is not None:
            d["partial_integral_trace"] = [[t, v] for t, v in self.partial_integral_trace]
        return d


@dataclass
class ClassificationResult:
    k0: float  # int, or math.inf
    regime: str
    verdicts: list[Verdict]
    method: str
    lam: float
    law: str = ""
    warnings: list[str] = field(default_factory=list)
    inconclusive: bool = False

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "law": self.law,
            "method": self.method,
            "k0": "inf" if math.isinf(self.k0) else int(self.k0),
            "regime": self.regime,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "warnings": list(self.warnings),
        }


def regime_of(k0: float) -> str:
    if k0 == 0:
        return RECURRENT
    if math.isinf(k0):
        return TRANSIENT
    return MIXED


def classify_symbolic(profile: AsymptoticProfile, lam: float, k_max: int = DEFAULT_K_MAX,
                      law_name: str = "") -> ClassificationResult:
    """Exact ``k0`` from a certified profile.

    With ``p = lam * L`` the integrand behaves like
    ``C t**-p (ln t)**(k - lam*beta)`` (times ``L**k``), hence:

    * finite mean, or ``p < 1``: every ``I_k`` diverges, ``k0 = 0``;
    * ``L = inf`` or ``p > 1``: every ``I_k`` converges, ``k0 = inf``;
    * ``p = 1``: ``I_k`` diverges iff ``k - lam*beta >= -1``, so
      ``k0 = max(0, ceil(lam*beta - 1))``.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    warnings: list[str] = []
    if profile.bounded_mean:
        k0: float = 0
    elif math.isinf(profile.L):
        k0 = math.inf
    else:
        p = lam * profile.L
        if math.isclose(p, 1.0, rel_tol=1e-12, abs_tol=0.0):
            if not profile.beta_known:
                raise ProfileNotCertified(
                    "lambda*L = 1 needs a certified second-order coefficient; use classify_numeric")
            if profile.extra_terms:
                raise ProfileNotCertified(
                    "profile has terms beyond L ln t + beta ln ln t; outside the supported class")
            threshold = lam * profile.beta - 1.0
            # Round away float noise so that integer boundaries count as divergent.
            r = round(threshold)
            if math.isclose(threshold, r, rel_tol=0.0, abs_tol=1e-9):
                threshold = float(r)
            k0 = max(0, math.ceil(threshold))
        elif p < 1:
            k0 = 0
        else:
            k0 = math.inf
        if profile.extra_terms and not math.isclose(p, 1.0):
            warnings.append("profile has extra terms; only the L-threshold was used")

    verdicts = [Verdict(k, bool(k >= k0), "symbolic") for k in range(k_max + 1)]
    return ClassificationResult(k0, regime_of(k0), verdicts, "symbolic-profile", lam,
                                law_name, warnings)


def occupation_integrand(law: ServiceLaw, lam: float, k: int):
    """``t -> m(t)**k * exp(-lam m(t))`` evaluated in log space."""

    def f(t):
        m = np.asarray(law.m(np.asarray(t, dtype=float)), dtype=float)
        if k == 0:
            return np.exp(-lam * m)
        with np.errstate(divide="ignore"):
            return np.where(m > 0, np.exp(k * np.log(np.maximum(m, 1e-300)) - lam * m), 0.0)

    return f


def _numeric_verdict(law: ServiceLaw, lam: float, k: int, rel_tol: float,
                     panel_budget: int) -> Verdict:
    f = occupation_integrand(law, lam, k)

    def g(x):
        t = np.exp(x)
        return f(t) * t

    first = 2.0 ** FIRST_DOUBLING
    head = integrate_finite(f, 0.0, first, rel_tol, 0.0, panel_budget, breakpoints=law.kinks)
    if not head.converged:
        return Verdict(k, None, "inconclusive")
    total = head.value
    trace = [(first, total)]
    segments, horizons = [], []
    for j in range(FIRST_DOUBLING + 1, LAST_DOUBLING + 1):
        lo, hi = 2.0 ** (j - 1), 2.0 ** j
        est = integrate_finite(g, math.log(lo), math.log(hi), rel_tol, 0.0, panel_budget)
        if not est.converged:
            return Verdict(k, None, "inconclusive", trace)
        segments.append(est.value)
        horizons.append(hi)
        total += est.value
        trace.append((hi, total))
    if divergence_suspected(segments, horizons):
        return Verdict(k, True, "divergence-suspected", trace)
    return Verdict(k, False, "convergent-suspected", trace)


def classify_numeric(law: ServiceLaw, lam: float, k_max: int = DEFAULT_K_MAX,
                     rel_tol: float = DEFAULT_REL_TOL,
                     panel_budget: int = DEFAULT_PANEL_BUDGET) -> ClassificationResult:
    """Diagnostic classification from partial integrals over 2**10 .. 2**60.

    ``k0`` is the first ``k`` flagged divergence-suspected.  If none is
    flagged the result is inconclusive (``k0 >= k_max + 1``) and the regime
    is reported as Transient only in the sense of that lower bound.  When the
    law carries a certified profile the symbolic answer is computed too and
    any disagreement is recorded in ``warnings``.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    verdicts = [_numeric_verdict(law, lam, k, rel_tol, panel_budget) for k in range(k_max + 1)]
    warnings: list[str] = []
    inconclusive = False
    k0: float = math.inf
    for v in verdicts:
        if v.divergent is None:
            inconclusive = True
            warnings.append(f"k={v.k}: quadrature failed, verdict inconclusive")
            break
        if v.divergent:
            k0 = v.k
            break
    else:
        inconclusive = True
        warnings.append(f"no divergence up to k_max={k_max}: k0 >= {k_max + 1} (inconclusive)")
    flags = [v.divergent for v in verdicts if v.divergent is not None]
    if any(a and not b for a, b in zip(flags, flags[1:])):
        warnings.append("numeric verdicts are not monotone in k")

    result = ClassificationResult(k0, regime_of(k0), verdicts, "numeric-diagnostic", lam,
                                  law.name, warnings, inconclusive)
    if law.profile is not None:
        try:
            sym = classify_symbolic(law.profile, lam, k_max, law.name)
        except ProfileNotCertified:
            sym = None
        if sym is not None:
            sym_k0 = sym.k0 if sym.k0 <= k_max else math.inf
            if sym_k0 != k0:
                warnings.append(
                    f"numeric k0={_k0_str(k0)} disagrees with symbolic k0={_k0_str(sym.k0)}")
    return result


def classify(law: ServiceLaw, lam: float, k_max: int = DEFAULT_K_MAX,
             numeric: bool = False, **kw) -> ClassificationResult:
    """Symbolic when the law has a usable profile, numeric otherwise."""
    if not numeric and law.profile is not None:
        try:
            return classify_symbolic(law.profile, lam, k_max, law.name)
        except ProfileNotCertified:
            pass
    return classify_numeric(law, lam, k_max, **kw)


def _k0_str(k0: float) -> str:
    return "inf" if math.isinf(k0) else str(int(k0))


@dataclass
class ProfileEstimate:
    profile: AsymptoticProfile
    residual: float
    low_confidence: bool


def estimate_profile(law: ServiceLaw, lam: float = 1.0, t_max: float = 1e12) -> ProfileEstimate:
    """Least-squares fit of ``m(t) ~ L ln t + beta ln ln t + c``.

    The fit uses a geometric grid over the top two decades below ``t_max``.
    A law whose mean barely moves between ``1e6`` and ``t_max`` is flagged
    as finite-mean; polynomial growth of ``m`` is reported as ``L = inf``.
    ``lam`` does not enter the fit; it is accepted for call symmetry with
    the classifiers.
    """
    del lam
    m_hi = float(law.m(t_max))
    if m_hi - float(law.m(1e6)) < 1e-6:
        return ProfileEstimate(AsymptoticProfile.finite_mean(), 0.0, False)
    t = np.geomspace(t_max / 100, t_max, 41)
    m = np.asarray(law.m(t), dtype=float)
    lt = np.log(t)
    # Growth rate of m against ln t; ~1 inside the log class, large for powers.
    log_slope = np.polyfit(np.log(lt), np.log(m), 1)[0]
    if log_slope > 2.0:
        return ProfileEstimate(AsymptoticProfile(L=math.inf), 0.0, False)
    design = np.column_stack([lt, np.log(lt), np.ones_like(lt)])
    coef, *_ = np.linalg.lstsq(design, m, rcond=None)
    fitted = design @ coef
    residual = float(np.sqrt(np.mean((fitted - m) ** 2)))
    low = bool(np.linalg.cond(design) > 1e6 or residual > 1e-3 * abs(m).max())
    L = max(0.0, float(coef[0]))
    return ProfileEstimate(AsymptoticProfile(L=L, beta=float(coef[1]), beta_known=False),
                           residual, low)
