"""Service-time laws: tails, inverse-CDF samplers and truncated means.

The truncated mean ``m(t) = E(S ^ t)`` is computed as the integral of the
tail over ``[0, t]``.  Laws that know a closed form carry it; for the rest
:func:`truncated_mean` integrates the tail numerically and caches partial
integrals on a geometric grid.
"""
from __future__ import annotations

import math
import re
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .quadrature import integrate_finite

ArrayFn = Callable[[np.ndarray], np.ndarray]


class LawSpecError(ValueError):
    """Malformed or unknown law specification string."""


class NumericFailure(RuntimeError):
    """A quadrature needed for a truncated mean did not converge."""


@dataclass(frozen=True)
class AsymptoticProfile:
    """Two-term log asymptotics ``m(t) = L ln t + beta ln ln t + O(1)``.

    ``bounded_mean`` marks laws with ``E S < inf`` (``L`` is then 0).
    ``extra_terms`` marks a law whose expansion needs terms beyond the
    two-term class; the classifier refuses boundary decisions for it.
    """

    L: float
    beta: float = 0.0
    beta_known: bool = False
    bounded_mean: bool = False
    extra_terms: bool = False

    def __post_init__(self):
        if not self.L >= 0:
            raise ValueError("profile L must be >= 0")

    @classmethod
    def finite_mean(cls) -> "AsymptoticProfile":
        return cls(L=0.0, beta=0.0, beta_known=True, bounded_mean=True)

    def to_dict(self) -> dict:
        return {
            "L": "inf" if math.isinf(self.L) else self.L,
            "beta": self.beta,
            "beta_known": self.beta_known,
            "bounded_mean": self.bounded_mean,
            "extra_terms": self.extra_terms,
        }


@dataclass(frozen=True, eq=False)
class ServiceLaw:
    """A service-time distribution.

    ``tail`` and ``quantile`` act elementwise on numpy arrays.  ``kinks``
    lists points where the tail is not smooth; quadrature splits there.
    """

    name: str
    tail: ArrayFn
    quantile: ArrayFn
    closed_mean: Optional[ArrayFn] = None
    profile: Optional[AsymptoticProfile] = None
    kinks: tuple[float, ...] = ()
    _cache: "_MeanCache" = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._cache is None:
            object.__setattr__(self, "_cache", _MeanCache(self.tail, self.kinks))

    def m(self, t):
        """Truncated mean at ``t`` (scalar or array)."""
        return truncated_mean(self, t)

    def sample(self, uniforms: np.ndarray) -> np.ndarray:
        return self.quantile(np.asarray(uniforms, dtype=float))

    def without_closed_form(self) -> "ServiceLaw":
        """Same law, but forcing the numeric truncated-mean route."""
        return ServiceLaw(self.name + "[numeric]", self.tail, self.quantile, None,
                          self.profile, self.kinks)

    def __repr__(self) -> str:
        return f"ServiceLaw({self.name})"


class _MeanCache:
    """Cumulative tail integrals on the grid 0, 2**(j/2) for j >= -40.

    Grows lazily under a lock; a query integrates only the stretch from the
    nearest grid node below, so cached and fresh answers coincide.
    """

    J0 = -40
    REL_TOL = 1e-10

    def __init__(self, tail: ArrayFn, kinks: tuple[float, ...]):
        self.tail = tail
        self.kinks = kinks
        self.nodes = [0.0]
        self.values = [0.0]
        self.lock = threading.Lock()

    def _node(self, i: int) -> float:
        return 0.0 if i == 0 else 2.0 ** ((self.J0 + i - 1) / 2)

    def _piece(self, a: float, b: float) -> float:
        est = integrate_finite(self.tail, a, b, rel_tol=self.REL_TOL, abs_tol=1e-300,
                               breakpoints=self.kinks, dyadic_cuts=0)
        if not est.converged:
            raise NumericFailure(f"tail quadrature on [{a}, {b}] did not converge")
        return est.value

    def __call__(self, t: float) -> float:
        if t <= 0:
            return 0.0
        with self.lock:
            while self.nodes[-1] < t:
                i = len(self.nodes)
                lo, hi = self.nodes[-1], self._node(i)
                self.values.append(self.values[-1] + self._piece(lo, hi))
                self.nodes.append(hi)
            i = int(np.searchsorted(self.nodes, t, side="right")) - 1
            base_t, base_v = self.nodes[i], self.values[i]
        if base_t == t:
            return base_v
        return base_v + self._piece(base_t, t)


def truncated_mean(law: ServiceLaw, t):
    """``E(S ^ t)``: closed form when the law has one, else cached quadrature."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise ValueError("truncated_mean requires t >= 0")
    if law.closed_mean is not None:
        out = np.asarray(law.closed_mean(arr), dtype=float)
    else:
        flat = arr.ravel()
        out = np.array([law._cache(float(x)) for x in flat]).reshape(arr.shape)
    return float(out) if np.ndim(t) == 0 else out


# --- built-in laws ---------------------------------------------------------

def _strange_g(u, b):
    return 1.0 / u + b / (u * np.log(u))


def _strange_log_quantile(y: np.ndarray, b: float) -> np.ndarray:
    """Solve x - ln(1 + b/x) = y for x > 0 (x = ln u, y = -ln(tail)).

    The left side is increasing and concave, so Newton started to the right
    of the root decreases monotonically onto it.
    """
    x = y + b + 1.0
    for _ in range(100):
        h = x - np.log1p(b / x) - y
        dh = 1.0 + b / (x * (x + b))
        step = h / dh
        x = x - step
        if np.all(np.abs(step) <= 4e-16 * x):
            break
    return x


def make_strange_law(b: float) -> ServiceLaw:
    """Tail ``min(1, 1/u + b/(u ln u))``, so ``m(t) = ln t + b ln ln t + O(1)``.

    Below the crossing point ``u0`` where ``1/u + b/(u ln u) = 1`` the tail
    is 1, i.e. ``S >= u0`` almost surely.
    """
    if not b > 0:
        raise ValueError("strange law needs b > 0")
    b = float(b)
    x0 = float(_strange_log_quantile(np.array([0.0]), b)[0])
    u0 = math.exp(x0)
    ln_u0 = x0

    def tail(u):
        u = np.asarray(u, dtype=float)
        safe = np.maximum(u, u0)
        return np.where(u < u0, 1.0, np.minimum(1.0, _strange_g(safe, b)))

    def quantile(p):
        y = -np.log1p(-np.asarray(p, dtype=float))
        return np.exp(_strange_log_quantile(y, b))

    def closed_mean(t):
        t = np.asarray(t, dtype=float)
        safe = np.maximum(t, u0)
        beyond = u0 + (np.log(safe) - ln_u0) + b * (np.log(np.log(safe)) - math.log(ln_u0))
        return np.where(t <= u0, t, beyond)

    return ServiceLaw(
        name=f"strange(b={_fmt(b)})",
        tail=tail,
        quantile=quantile,
        closed_mean=closed_mean,
        profile=AsymptoticProfile(L=1.0, beta=b, beta_known=True),
        kinks=(u0,),
    )


def make_pareto_law(alpha: float, scale: float = 1.0) -> ServiceLaw:
    """Tail ``min(1, (scale/u)**alpha)``."""
    if not (alpha > 0 and scale > 0):
        raise ValueError("pareto law needs alpha > 0 and scale > 0")
    alpha, scale = float(alpha), float(scale)

    def tail(u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(u <= scale, 1.0, (scale / np.maximum(u, scale)) ** alpha)

    def quantile(p):
        return scale * (1.0 - np.asarray(p, dtype=float)) ** (-1.0 / alpha)

    def closed_mean(t):
        t = np.asarray(t, dtype=float)
        safe = np.maximum(t, scale)
        if alpha == 1.0:
            beyond = scale + scale * np.log(safe / scale)
        else:
            beyond = scale + scale ** alpha * (safe ** (1 - alpha) - scale ** (1 - alpha)) / (1 - alpha)
        return np.where(t <= scale, t, beyond)

    if alpha > 1:
        profile = AsymptoticProfile.finite_mean()
    elif alpha == 1:
        profile = AsymptoticProfile(L=scale, beta=0.0, beta_known=True)
    else:
        profile = AsymptoticProfile(L=math.inf)
    return ServiceLaw(
        name=f"pareto(alpha={_fmt(alpha)},scale={_fmt(scale)})",
        tail=tail,
        quantile=quantile,
        closed_mean=closed_mean,
        profile=profile,
        kinks=(scale,),
    )


def make_exponential_law(mean: float) -> ServiceLaw:
    if not mean > 0:
        raise ValueError("exponential law needs mean > 0")
    mean = float(mean)
    return ServiceLaw(
        name=f"exp(mean={_fmt(mean)})",
        tail=lambda u: np.exp(-np.asarray(u, dtype=float) / mean),
        quantile=lambda p: -mean * np.log1p(-np.asarray(p, dtype=float)),
        closed_mean=lambda t: -mean * np.expm1(-np.asarray(t, dtype=float) / mean),
        profile=AsymptoticProfile.finite_mean(),
    )


def make_deterministic_law(value: float) -> ServiceLaw:
    """Constant service time ``S = value``."""
    if not value > 0:
        raise ValueError("deterministic law needs value > 0")
    value = float(value)
    return ServiceLaw(
        name=f"det(value={_fmt(value)})",
        tail=lambda u: np.where(np.asarray(u, dtype=float) < value, 1.0, 0.0),
        quantile=lambda p: np.full(np.shape(p), value),
        closed_mean=lambda t: np.minimum(np.asarray(t, dtype=float), value),
        profile=AsymptoticProfile.finite_mean(),
        kinks=(value,),
    )


def _fmt(x: float) -> str:
    return repr(float(x))


# --- law specification grammar ----------------------------------------------

_LAWS = {
    "strange": (make_strange_law, ("b",), {}),
    "pareto": (make_pareto_law, ("alpha", "scale"), {"scale": 1.0}),
    "exp": (make_exponential_law, ("mean",), {}),
    "det": (make_deterministic_law, ("value",), {}),
}

_SPEC_RE = re.compile(r"^\s*([A-Za-z_]\w*)\s*(?:\((.*)\))?\s*$", re.S)


def parse_law(spec: str) -> ServiceLaw:
    """Build a law from e.g. ``"strange(b=2.5)"`` or ``"PARETO( alpha = 1 )"``."""
    match = _SPEC_RE.match(spec)
    if not match:
        raise LawSpecError(f"cannot parse law spec {spec!r}")
    name = match.group(1).lower()
    if name not in _LAWS:
        raise LawSpecError(f"unknown law {name!r}; expected one of {sorted(_LAWS)}")
    factory, allowed, defaults = _LAWS[name]
    params = dict(defaults)
    seen = set()
    body = (match.group(2) or "").strip()
    for item in filter(None, (s.strip() for s in body.split(","))) if body else ():
        if "=" not in item:
            raise LawSpecError(f"parameter {item!r} in {spec!r} is not of the form key=value")
        key, raw = (s.strip() for s in item.split("=", 1))
        key = key.lower()
        if key not in allowed:
            raise LawSpecError(f"unknown parameter {key!r} for law {name!r}; allowed: {list(allowed)}")
        if key in seen:
            raise LawSpecError(f"parameter {key!r} given twice in {spec!r}")
        try:
            params[key] = float(raw)
        except ValueError:
            raise LawSpecError(f"parameter {key}={raw!r} is not a number") from None
        seen.add(key)
    missing = [k for k in allowed if k not in params]
    if missing:
        raise LawSpecError(f"law {name!r} is missing parameter(s) {missing}")
    try:
        return factory(**params)
    except ValueError as exc:
        raise LawSpecError(str(exc)) from None


BUILTIN_SPECS = (
    "strange(b=2.5)",
    "pareto(alpha=0.5,scale=1.0)",
    "pareto(alpha=1.0,scale=1.0)",
    "pareto(alpha=2.0,scale=1.0)",
    "exp(mean=1.0)",
    "det(value=1.0)",
)
