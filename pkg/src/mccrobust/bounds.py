"""Estimation-error bounds for the scalar MCC estimator.

Given ``M`` of ``N`` samples whose noises satisfy ``|u| <= eps_u`` and
``|v| <= eps_v`` (with ``N > M > N/2``) and ``c = min |x_obs|`` over those
samples, the global maximizer of the empirical correntropy lies within
``xi`` of ``w0`` whenever the kernel width exceeds a threshold.  Natural
logarithms throughout.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

from .model import CleanSet, clean_index_set

__all__ = [
    "AssumptionError",
    "BoundInputs",
    "BoundReport",
    "AssumptionCheck",
    "combined_eps",
    "assumption1_violation",
    "sigma_threshold",
    "corollary1_sigma",
    "xi_theorem1",
    "xi_corollary1",
    "xi_corollary2",
    "compute_bound",
    "check_assumptions",
]

# inner log arguments below this are treated as inadmissible
LOG_FLOOR = 1e-300
_LOG_LOG_FLOOR = math.log(LOG_FLOOR)


class AssumptionError(ValueError):
    pass


@dataclass(frozen=True)
class BoundInputs:
    n: int
    m: int
    eps_u: float
    eps_v: float
    w0_abs: float
    c: Optional[float]
    sigma: Optional[float] = None
    lam: Optional[float] = None

    @property
    def combined_eps(self) -> float:
        return combined_eps(self.eps_u, self.eps_v, self.w0_abs)


@dataclass
class BoundReport:
    n: int
    m: int
    eps_u: float
    eps_v: float
    w0_abs: float
    c: Optional[float]
    sigma: Optional[float]
    lam: Optional[float]
    combined_eps: float
    sigma_threshold: Optional[float]
    xi: Optional[float]
    formula: str
    admissible: bool
    failure_reason: Optional[str] = None

    def to_record(self) -> dict:
        return asdict(self)


def combined_eps(eps_u: float, eps_v: float, w0_abs: float) -> float:
    if eps_u < 0 or eps_v < 0:
        raise ValueError("noise thresholds must be nonnegative")
    return eps_v + abs(w0_abs) * eps_u


def assumption1_violation(n: int, m: int) -> Optional[str]:
    if not (n > m and 2 * m > n):
        return f"clean-majority condition violated: need N > M > N/2, got N={n}, M={m}"
    return None


def _assumption2_violation(c) -> Optional[str]:
    if c is None or not c > 0:
        return f"clean-input condition violated: need c > 0, got c={c}"
    return None


def sigma_threshold(n: int, m: int, eps_u: float, eps_v: float, w0_abs: float) -> float:
    """Smallest admissible kernel width; zero when the combined deviation is zero."""
    msg = assumption1_violation(n, m)
    if msg:
        raise AssumptionError(msg)
    ce = combined_eps(eps_u, eps_v, w0_abs)
    if ce == 0.0:
        return 0.0
    return ce / math.sqrt(-2.0 * _log_ratio(n, m))


def corollary1_sigma(n: int, m: int, lam: float, ce: float) -> float:
    msg = assumption1_violation(n, m)
    if msg:
        raise AssumptionError(msg)
    return lam * ce / math.sqrt(-2.0 * _log_ratio(n, m))


def _report(inputs: BoundInputs, formula: str, **kw) -> BoundReport:
    base = dict(n=inputs.n, m=inputs.m, eps_u=inputs.eps_u, eps_v=inputs.eps_v,
                w0_abs=abs(inputs.w0_abs), c=inputs.c, sigma=inputs.sigma, lam=inputs.lam,
                combined_eps=inputs.combined_eps, sigma_threshold=None, xi=None,
                formula=formula, admissible=False)
    base.update(kw)
    return BoundReport(**base)


def _log_ratio(n: int, m: int) -> float:
    return math.log(n - m) - math.log(m)


def _log_exp_minus_ratio(a: float, log_ratio: float) -> Optional[float]:
    """``log(exp(a) - r)`` given ``log r``; None when the difference is below LOG_FLOOR."""
    t = math.expm1(a - log_ratio)
    if not t > 0 or not math.isfinite(t):
        return None
    out = log_ratio + math.log(t)
    return out if out >= _LOG_LOG_FLOOR else None


def xi_theorem1(inputs: BoundInputs) -> BoundReport:
    """Error bound at an explicit kernel width ``inputs.sigma``."""
    if inputs.sigma is None or not inputs.sigma > 0:
        raise ValueError("theorem bound needs a positive sigma")
    msg = assumption1_violation(inputs.n, inputs.m) or _assumption2_violation(inputs.c)
    if msg:
        return _report(inputs, "theorem1", failure_reason=msg)
    ce = inputs.combined_eps
    sigma = inputs.sigma
    thr = sigma_threshold(inputs.n, inputs.m, inputs.eps_u, inputs.eps_v, inputs.w0_abs)
    if not sigma > thr:
        return _report(inputs, "theorem1", sigma_threshold=thr,
                       failure_reason=f"kernel width {sigma!r} does not exceed threshold {thr!r}")
    log_ratio = _log_ratio(inputs.n, inputs.m)
    z = ce / sigma
    # log(exp(-z^2/2) - r) without cancellation
    log_inner = _log_exp_minus_ratio(-0.5 * z * z, log_ratio)
    if log_inner is None:
        return _report(inputs, "theorem1", sigma_threshold=thr,
                       failure_reason=f"inner log argument is below {LOG_FLOOR:g}")
    xi = (sigma * math.sqrt(-2.0 * log_inner) + ce) / inputs.c
    return _report(inputs, "theorem1", sigma_threshold=thr, xi=xi, admissible=True)


def xi_corollary1(n: int, m: int, lam: float, c: Optional[float], eps_u: float, eps_v: float,
                  w0_abs: float) -> BoundReport:
    """Bound with the kernel width set to ``lam`` times the threshold."""
    if not lam > 1:
        raise ValueError(f"lambda must exceed 1, got {lam}")
    ce = combined_eps(eps_u, eps_v, w0_abs)
    if ce == 0.0:
        raise ValueError("combined deviation is zero; use xi_corollary2")
    inputs = BoundInputs(n=n, m=m, eps_u=eps_u, eps_v=eps_v, w0_abs=w0_abs, c=c, lam=lam)
    msg = assumption1_violation(n, m) or _assumption2_violation(c)
    if msg:
        return _report(inputs, "corollary1", failure_reason=msg)
    thr = sigma_threshold(n, m, eps_u, eps_v, w0_abs)
    sigma = lam * thr
    log_ratio = _log_ratio(n, m)
    log_gap = _log_exp_minus_ratio(log_ratio / (lam * lam), log_ratio)
    if log_gap is None:
        return _report(inputs, "corollary1", sigma=sigma, sigma_threshold=thr,
                       failure_reason=f"inner log argument is below {LOG_FLOOR:g}")
    xi = (lam * math.sqrt(log_gap / log_ratio) + 1.0) * ce / c
    return _report(inputs, "corollary1", sigma=sigma, sigma_threshold=thr, xi=xi, admissible=True)


def xi_corollary2(n: int, m: int, sigma: float, c: Optional[float]) -> BoundReport:
    """Bound for noise-free clean samples: ``(sigma/c) sqrt(2 log(M / (2M - N)))``."""
    if not sigma > 0:
        raise ValueError("kernel width must be positive")
    inputs = BoundInputs(n=n, m=m, eps_u=0.0, eps_v=0.0, w0_abs=0.0, c=c, sigma=sigma)
    msg = assumption1_violation(n, m) or _assumption2_violation(c)
    if msg:
        return _report(inputs, "corollary2", failure_reason=msg)
    xi = (sigma / c) * math.sqrt(2.0 * math.log(m / (2 * m - n)))
    return _report(inputs, "corollary2", sigma_threshold=0.0, xi=xi, admissible=True)


def compute_bound(inputs: BoundInputs) -> BoundReport:
    """Pick the applicable formula.

    Zero combined deviation uses the noise-free corollary (needs ``sigma``);
    otherwise ``lam`` selects the kernel-width-multiplier corollary and a bare
    ``sigma`` the general theorem.
    """
    ce = inputs.combined_eps
    formula = "corollary2" if ce == 0.0 else ("corollary1" if inputs.lam is not None else "theorem1")
    msg = assumption1_violation(inputs.n, inputs.m) or _assumption2_violation(inputs.c)
    if msg:
        return _report(inputs, formula, failure_reason=msg)
    if ce == 0.0:
        if inputs.sigma is None:
            raise ValueError("zero combined deviation needs an explicit sigma")
        rep = xi_corollary2(inputs.n, inputs.m, inputs.sigma, inputs.c)
        rep.w0_abs = abs(inputs.w0_abs)
        rep.eps_u, rep.eps_v = inputs.eps_u, inputs.eps_v
        return rep
    if inputs.lam is not None:
        return xi_corollary1(inputs.n, inputs.m, inputs.lam, inputs.c,
                             inputs.eps_u, inputs.eps_v, inputs.w0_abs)
    if inputs.sigma is None:
        raise ValueError("need either sigma or lambda")
    return xi_theorem1(inputs)


@dataclass
class AssumptionCheck:
    clean: CleanSet
    n: int
    admissible: bool
    diagnostics: list = field(default_factory=list)


def check_assumptions(dataset, eps_u: float, eps_v: float) -> AssumptionCheck:
    """Build the clean set and report (never raise) which assumptions fail."""
    clean = clean_index_set(dataset, eps_u, eps_v)
    diags = []
    msg = assumption1_violation(dataset.n, clean.m)
    if msg:
        diags.append(msg)
    msg = _assumption2_violation(clean.c)
    if msg:
        diags.append(msg)
    return AssumptionCheck(clean=clean, n=dataset.n, admissible=not diags, diagnostics=diags)
