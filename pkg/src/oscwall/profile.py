"""Wall oscillation profiles.

A profile is a finite even cosine series

    F(t) = -d + sum_{k>=1} a_k cos(2 pi k t),

1-periodic, even, and strictly negative.  Evenness and the critical points
F'(0) = F'(+-1/2) = 0 hold identically for this family; strict negativity is
certified from the coefficient bound d - sum|a_k| > 0 or, failing that, by
dense sampling over one period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_NEG_SAMPLES = 4096


@dataclass(frozen=True)
class Profile:
    """Finite cosine-series wall profile F(t) = -d + sum a_k cos(2 pi k t)."""

    kind: str
    d: float
    coeffs: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in ("flat", "cosine", "series"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if not (self.d > 0.0):
            raise ValueError("profile depth d must be positive")
        if self.kind == "flat" and self.coeffs:
            raise ValueError("flat profile takes no oscillation coefficients")
        if self.kind == "cosine" and len(self.coeffs) != 1:
            raise ValueError("cosine profile takes exactly one coefficient")
        _check_negative(self.d, self.coeffs)

    @property
    def descriptor(self) -> str:
        """Canonical text form, parseable by parse_descriptor."""
        if self.kind == "flat":
            return f"flat:d={self.d:g}"
        if self.kind == "cosine":
            return f"cosine:d={self.d:g},a={self.coeffs[0]:g}"
        terms = ",".join(f"a{k + 1}={a:g}" for k, a in enumerate(self.coeffs))
        return f"series:d={self.d:g},{terms}"

    @property
    def max_depth(self) -> float:
        """Upper bound for |F|: d + sum |a_k|."""
        return self.d + sum(abs(a) for a in self.coeffs)

    @property
    def mean_depth(self) -> float:
        """-integral of F over one period (the zeroth cosine coefficient)."""
        return self.d


def _check_negative(d: float, coeffs: tuple[float, ...]) -> None:
    slack = d - sum(abs(a) for a in coeffs)
    if slack > 0.0:
        return
    t = np.linspace(-0.5, 0.5, _NEG_SAMPLES, endpoint=False)
    vals = _eval_series(d, coeffs, t)[0]
    if vals.max() >= 0.0:
        raise ValueError("profile is not strictly negative")


def _eval_series(d, coeffs, t):
    t = np.asarray(t, dtype=float)
    vals = np.full_like(t, -d)
    derivs = np.zeros_like(t)
    for k, a in enumerate(coeffs, start=1):
        w = 2.0 * math.pi * k
        vals = vals + a * np.cos(w * t)
        derivs = derivs - a * w * np.sin(w * t)
    return vals, derivs


def make_profile(kind: str, **params) -> Profile:
    """Build a profile.

    flat:   make_profile("flat", d=1.0)
    cosine: make_profile("cosine", d=1.0, a=0.4)
    series: make_profile("series", d=1.0, coeffs=[0.3, 0.1])
    """
    if kind == "flat":
        return Profile("flat", float(params["d"]))
    if kind == "cosine":
        return Profile("cosine", float(params["d"]), (float(params["a"]),))
    if kind == "series":
        coeffs = tuple(float(a) for a in params["coeffs"])
        return Profile("series", float(params["d"]), coeffs)
    raise ValueError(f"unknown profile kind {kind!r}")


def eval_profile(p: Profile, t) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate (F(t), F'(t)); accepts scalars or arrays, returns arrays."""
    return _eval_series(p.d, p.coeffs, t)


def parse_descriptor(text: str) -> Profile:
    """Parse 'flat:d=1', 'cosine:d=1,a=0.4' or 'series:d=1,a1=0.3,a2=0.1'."""
    head, _, body = text.partition(":")
    head = head.strip()
    if not body:
        raise ValueError(f"malformed profile descriptor {text!r}")
    fields = {}
    for item in body.split(","):
        key, _, val = item.partition("=")
        if not val:
            raise ValueError(f"malformed profile descriptor {text!r}")
        fields[key.strip()] = float(val)
    def take(key):
        if key not in fields:
            raise ValueError(f"profile descriptor {text!r} misses {key}=")
        return fields.pop(key)

    if head == "flat":
        return make_profile("flat", d=take("d"))
    if head == "cosine":
        return make_profile("cosine", d=take("d"), a=take("a"))
    if head == "series":
        d = take("d")
        coeffs = []
        for k in range(1, len(fields) + 1):
            key = f"a{k}"
            if key not in fields:
                raise ValueError(f"series descriptor misses coefficient {key}")
            coeffs.append(fields[key])
        return make_profile("series", d=d, coeffs=coeffs)
    raise ValueError(f"unknown profile kind {head!r}")
