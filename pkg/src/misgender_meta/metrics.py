"""Variation and agreement statistics over binary correct-gendering outcomes."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

from .text import tokenize

Z95 = 1.96
CI_METHODS = {
    "mcc": "Fisher z-transform, z +/- 1.96/sqrt(n-3), back-transformed",
    "kappa": "normal approximation, kappa +/- 1.96*sqrt(p_o(1-p_o)/(n(1-p_e)^2))",
}


class FitError(ValueError):
    pass


def _check_binary(values: Sequence[int]) -> None:
    if any(v not in (0, 1) for v in values):
        raise ValueError("series must contain only 0/1 values")


def sigma(values: Sequence[int]) -> float:
    """Population standard deviation of one instance's binary outcomes."""
    if not values:
        raise ValueError("standard deviation of an empty series")
    n = len(values)
    if all(v in (0, 1) for v in values):
        k = sum(values)
        return math.sqrt(k * (n - k)) / n
    mean = math.fsum(values) / n
    return math.sqrt(math.fsum((v - mean) ** 2 for v in values) / n)


def instance_sigma(series: Mapping[str, Sequence[int]]) -> dict[str, float]:
    return {key: sigma(vals) for key, vals in series.items()}


@dataclass(frozen=True)
class Contingency:
    """Counts with ``a`` as the first rater: tp=(1,1), fp=(0,1), fn=(1,0), tn=(0,0)."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @classmethod
    def of(cls, a: Sequence[int], b: Sequence[int]) -> "Contingency":
        c = Counter(zip(a, b))
        return cls(c[(1, 1)], c[(0, 1)], c[(1, 0)], c[(0, 0)])


@dataclass(frozen=True)
class AgreementReport:
    n: int
    p_o: float
    mcc: float | None = None
    mcc_ci: tuple[float, float] | None = None
    kappa: float | None = None
    kappa_ci: tuple[float, float] | None = None
    undefined_reason: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mcc_ci"] = list(self.mcc_ci) if self.mcc_ci else None
        d["kappa_ci"] = list(self.kappa_ci) if self.kappa_ci else None
        d["ci_method"] = dict(CI_METHODS)
        return d


def mcc_from(c: Contingency) -> float | None:
    denom = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    if denom == 0:
        return None
    return (c.tp * c.tn - c.fp * c.fn) / math.sqrt(denom)


def kappa_from(c: Contingency) -> tuple[float | None, float, float]:
    """Returns (kappa, p_o, p_e); kappa is None when p_e == 1."""
    n = c.n
    p_o = (c.tp + c.tn) / n
    a1, b1 = (c.tp + c.fn) / n, (c.tp + c.fp) / n
    p_e = a1 * b1 + (1 - a1) * (1 - b1)
    if p_e == 1:
        return None, p_o, p_e
    return (p_o - p_e) / (1 - p_e), p_o, p_e


def mcc_ci(r: float, n: int) -> tuple[float, float] | None:
    if n < 4:
        return None
    if abs(r) >= 1:
        return (r, r)
    z = math.atanh(r)
    half = Z95 / math.sqrt(n - 3)
    return (math.tanh(z - half), math.tanh(z + half))


def kappa_ci(kappa: float, p_o: float, p_e: float, n: int) -> tuple[float, float] | None:
    if n < 4 or p_e >= 1:
        return None
    se = math.sqrt(p_o * (1 - p_o) / (n * (1 - p_e) ** 2))
    return (max(-1.0, kappa - Z95 * se), min(1.0, kappa + Z95 * se))


def agreement(a: Sequence[int], b: Sequence[int]) -> AgreementReport:
    """Observed agreement, MCC and Cohen's kappa for paired binary series."""
    if len(a) != len(b):
        raise ValueError(f"paired series differ in length: {len(a)} vs {len(b)}")
    if not a:
        raise ValueError("agreement of empty series")
    _check_binary(a)
    _check_binary(b)
    c = Contingency.of(a, b)
    reasons = []
    mcc = mcc_from(c)
    if mcc is None:
        reasons.append("mcc undefined: constant rater")
    kappa, p_o, p_e = kappa_from(c)
    if kappa is None:
        reasons.append("kappa undefined: both raters constant and identical (p_e = 1)")
    m_ci = mcc_ci(mcc, c.n) if mcc is not None else None
    k_ci = kappa_ci(kappa, p_o, p_e, c.n) if kappa is not None else None
    if c.n < 4 and (mcc is not None or kappa is not None):
        reasons.append("confidence intervals omitted: n < 4")
    return AgreementReport(c.n, p_o, mcc, m_ci, kappa, k_ci, "; ".join(reasons) or None)


def pearson(a: Sequence[float], b: Sequence[float]) -> float | None:
    n = len(a)
    ma, mb = math.fsum(a) / n, math.fsum(b) / n
    sab = math.fsum((x - ma) * (y - mb) for x, y in zip(a, b))
    saa = math.fsum((x - ma) ** 2 for x in a)
    sbb = math.fsum((y - mb) ** 2 for y in b)
    if saa == 0 or sbb == 0:
        return None
    return sab / math.sqrt(saa * sbb)


# ------------------------------------------------------------------ beta fit


@dataclass(frozen=True)
class BetaFit:
    alpha: float
    beta: float
    n: int

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise FitError("alpha and beta must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def beta_from_moments(mean: float, var: float, n: int = 0) -> BetaFit:
    if not 0 < mean < 1:
        raise FitError(f"mean must lie in (0, 1), got {mean}")
    bound = mean * (1 - mean)
    if not 0 < var < bound:
        raise FitError(f"variance bound violated: need 0 < s^2 < mean(1-mean) = {bound:.6g}, got {var:.6g}")
    common = bound / var - 1
    return BetaFit(mean * common, (1 - mean) * common, n)


def beta_fit(d: Sequence[float]) -> BetaFit:
    """Method-of-moments beta fit using the unbiased sample variance."""
    n = len(d)
    if n < 2:
        raise FitError("need at least two values")
    if any(not 0 <= x <= 1 for x in d):
        raise FitError("values must lie in [0, 1]")
    mean = math.fsum(d) / n
    var = math.fsum((x - mean) ** 2 for x in d) / (n - 1)
    return beta_from_moments(mean, var, n)


def _mean(values: Sequence[float]) -> float:
    if not values:
        raise ValueError("mean of empty sample set")
    return math.fsum(values) / len(values)


def disagreement_series(
    prob: Mapping[str, float | Sequence[float]],
    gen: Mapping[str, Sequence[float]],
    pairing: str = "misgendered_ruff",
) -> list[float]:
    """Per-instance probability that the two methods disagree, in ``prob`` key order."""
    if set(prob) != set(gen):
        raise ValueError("probability and generation outcomes have different instance keys")
    out = []
    for key, pv in prob.items():
        if pairing == "misgendered_ruff":
            if not isinstance(pv, (int, float)):
                raise ValueError(f"{key}: expected a single probability outcome")
            mp = float(pv)
        elif pairing == "tango":
            mp = _mean(pv) if not isinstance(pv, (int, float)) else float(pv)
        else:
            raise ValueError(f"unknown pairing {pairing!r}")
        mg = _mean(gen[key])
        out.append(mp * (1 - mg) + (1 - mp) * mg)
    return out


# --------------------------------------------------------------- repetition


def ngram_type_counts(tokens: Sequence[str], n: int) -> tuple[int, int]:
    """(number of n-gram types, number of types seen exactly once)."""
    counts = Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))
    return len(counts), sum(1 for c in counts.values() if c == 1)


def repetition_rate_tokens(tokens: Sequence[str]) -> float | None:
    if len(tokens) < 4:
        return None
    rates = []
    for n in range(1, 5):
        types, singletons = ngram_type_counts(tokens, n)
        rates.append((types - singletons) / types)
    if any(r == 0 for r in rates):
        return 0.0
    return math.exp(math.fsum(math.log(r) for r in rates) / 4)


def repetition_rate(text: str) -> float | None:
    """Geometric mean over n=1..4 of the share of repeated n-gram types.

    Returns None for texts with fewer than four tokens.
    """
    return repetition_rate_tokens([t.surface for t in tokenize(text)])


def mean_std(values: Sequence[float]) -> tuple[float, float] | None:
    if not values:
        return None
    m = math.fsum(values) / len(values)
    return m, math.sqrt(math.fsum((v - m) ** 2 for v in values) / len(values))
