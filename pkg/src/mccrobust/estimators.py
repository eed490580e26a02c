"""MSE, LAD, TLS and maximum-correntropy estimators for linear EIV data.

All estimators accept either a :class:`ScalarEIVDataset` (scalar ``w``) or a
:class:`VectorEIVDataset` (``w`` of length ``p``).  Residuals are always
``e = d - X_obs @ w``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .model import ScalarEIVDataset, VectorEIVDataset

__all__ = [
    "EstimationError",
    "MCCConfig",
    "EstimateResult",
    "residuals",
    "mse_estimate",
    "lad_estimate",
    "weighted_median",
    "tls_estimate",
    "mcc_objective",
    "mcc_gradient",
    "mcc_estimate_fixed_point",
    "mcc_estimate_grid",
    "mcc_estimate_eda",
    "mcc_estimate_gradient_ascent",
    "mcc_estimate_global",
    "mcc_estimate",
    "default_search_window",
    "golden_section_max",
]

Dataset = Union[ScalarEIVDataset, VectorEIVDataset]
Param = Union[float, np.ndarray]

SOLVERS = ("fixed-point", "grid", "eda", "gradient-ascent")


class EstimationError(ValueError):
    """An estimator's precondition failed or it produced no finite answer."""


@dataclass(frozen=True)
class MCCConfig:
    sigma: float
    solver: str = "fixed-point"
    max_iters: int = 500
    tol: float = 1e-8
    search_lo: Optional[float] = None
    search_hi: Optional[float] = None
    grid_points: int = 2000
    grid_refine: int = 3
    coarse_points: int = 64
    multistart: int = 3
    eda_population: int = 200
    eda_elites: int = 50
    eda_generations: int = 100
    eda_variance_floor: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"kernel width must be positive, got {self.sigma}")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; expected one of {SOLVERS}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if (self.search_lo is not None and self.search_hi is not None
                and not self.search_lo < self.search_hi):
            raise ValueError("search_lo must be < search_hi")
        if self.grid_points < 3:
            raise ValueError("grid_points must be >= 3")
        if not 1 <= self.multistart <= 3:
            raise ValueError("multistart must be 1, 2 or 3")
        if not 1 <= self.eda_elites < self.eda_population:
            raise ValueError("need 1 <= eda_elites < eda_population")

    def with_sigma(self, sigma: float) -> "MCCConfig":
        return replace(self, sigma=sigma)


@dataclass
class EstimateResult:
    estimator: str
    w_hat: Param
    objective: float
    residuals: np.ndarray
    iterations: int = 0
    converged: bool = True
    starts_tried: int = 1
    info: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        """Flat key-value form; vector parameters expand to ``w_hat_0``, ..."""
        rec = {"estimator": self.estimator}
        w = np.atleast_1d(np.asarray(self.w_hat, dtype=float))
        if np.ndim(self.w_hat) == 0:
            rec["w_hat"] = float(w[0])
        else:
            rec.update({f"w_hat_{k}": float(val) for k, val in enumerate(w)})
        rec.update(objective=float(self.objective), iterations=int(self.iterations),
                   converged=bool(self.converged))
        return rec


def _is_scalar(dataset: Dataset) -> bool:
    return isinstance(dataset, ScalarEIVDataset)


def residuals(dataset: Dataset, w: Param) -> np.ndarray:
    if _is_scalar(dataset):
        return dataset.d - float(w) * dataset.x_obs
    return dataset.d - dataset.x_obs_rows @ np.asarray(w, dtype=float)


def _pack(dataset: Dataset, w) -> Param:
    if _is_scalar(dataset):
        return float(np.asarray(w).reshape(-1)[0])
    return np.asarray(w, dtype=float).reshape(dataset.p)


# -- baselines -------------------------------------------------------------

def mse_estimate(dataset: Dataset) -> EstimateResult:
    """Least squares: closed form in the scalar case, normal equations otherwise."""
    if _is_scalar(dataset):
        x, d = dataset.x_obs, dataset.d
        sxx = float(x @ x)
        if sxx == 0.0:
            raise EstimationError("MSE: all observed inputs are zero")
        w = float(x @ d) / sxx
    else:
        X = dataset.x_obs_rows
        gram = X.T @ X
        if np.linalg.matrix_rank(gram) < dataset.p:
            raise EstimationError("MSE: regressor Gram matrix is singular")
        w = np.linalg.solve(gram, X.T @ dataset.d)
    e = residuals(dataset, w)
    return EstimateResult("mse", w, float(np.mean(e**2)), e)


def weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    """Lower weighted median: the smallest value whose cumulative weight reaches half."""
    order = np.argsort(values, kind="stable")
    v, wt = values[order], weights[order]
    cum = np.cumsum(wt)
    k = int(np.searchsorted(2.0 * cum, cum[-1], side="left"))
    return float(v[min(k, v.size - 1)])


def _lad_scalar(x: np.ndarray, d: np.ndarray) -> float:
    keep = x != 0.0
    if not np.any(keep):
        raise EstimationError("LAD: all observed inputs are zero")
    return weighted_median(d[keep] / x[keep], np.abs(x[keep]))


def lad_estimate(dataset: Dataset, tol: float = 1e-8, max_iters: int = 500,
                 floor: float = 1e-8) -> EstimateResult:
    """Least absolute deviation.

    Scalar (and single-tap) data are solved exactly with a weighted median of
    ``d/x_obs``; wider regressors use IRLS with weights ``1/max(|e|, floor)``.
    """
    if _is_scalar(dataset) or dataset.p == 1:
        x = dataset.x_obs if _is_scalar(dataset) else dataset.x_obs_rows[:, 0]
        w = _lad_scalar(x, dataset.d)
        w = w if _is_scalar(dataset) else np.array([w])
        e = residuals(dataset, w)
        return EstimateResult("lad", w, float(np.mean(np.abs(e))), e)

    X, d = dataset.x_obs_rows, dataset.d
    try:
        w = np.linalg.lstsq(X, d, rcond=None)[0]
    except np.linalg.LinAlgError as exc:
        raise EstimationError(f"LAD: {exc}") from exc
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        g = 1.0 / np.maximum(np.abs(d - X @ w), floor)
        Xg = X * g[:, None]
        try:
            w_new = np.linalg.solve(Xg.T @ X, Xg.T @ d)
        except np.linalg.LinAlgError as exc:
            raise EstimationError(f"LAD: singular weighted system ({exc})") from exc
        step = np.max(np.abs(w_new - w))
        w = w_new
        if step < tol:
            converged = True
            break
    e = residuals(dataset, w)
    return EstimateResult("lad", w, float(np.mean(np.abs(e))), e, iterations=it, converged=converged)


def tls_estimate(dataset: Dataset, noise_ratio: float = 1.0) -> EstimateResult:
    """Total least squares through the origin.

    Minimizes ``sum (d - X w)^2 / (noise_ratio + |w|^2)`` where
    ``noise_ratio = var(v) / var(u)``.  The default 1 is orthogonal regression;
    ``inf`` degenerates to least squares.
    """
    if not noise_ratio > 0:
        raise EstimationError("TLS: noise ratio must be positive")
    if math.isinf(noise_ratio):
        res = mse_estimate(dataset)
        res.estimator = "tls"
        return res
    X = dataset.x_obs.reshape(-1, 1) if _is_scalar(dataset) else dataset.x_obs_rows
    n, p = X.shape
    if n < p + 1:
        raise EstimationError(f"TLS: need at least p+1={p + 1} samples")
    scale = math.sqrt(noise_ratio)
    Z = np.column_stack([X, dataset.d / scale])
    if _is_scalar(dataset):
        evals, evecs = np.linalg.eigh(Z.T @ Z)
        direction = evecs[:, 0]
        small, nxt = math.sqrt(max(evals[0], 0.0)), math.sqrt(max(evals[1], 0.0))
    else:
        _, svals, vt = np.linalg.svd(Z, full_matrices=False)
        direction = vt[-1]
        small, nxt = svals[-1], svals[-2]
    if nxt - small <= 1e-12 * max(nxt, 1.0):
        raise EstimationError("TLS: smallest singular direction is not unique")
    if abs(direction[-1]) <= 1e-14 * np.max(np.abs(direction)):
        raise EstimationError("TLS: no finite solution (last component of the null direction is zero)")
    w = -scale * direction[:p] / direction[-1]
    w = _pack(dataset, w)
    e = residuals(dataset, w)
    obj = float(np.mean(e**2) / (noise_ratio + float(np.sum(np.square(w)))))
    return EstimateResult("tls", w, obj, e)


# -- correntropy -----------------------------------------------------------

def _deficit(e: np.ndarray, sigma: float, axis=-1):
    # mean(exp(-t)) - 1 without cancellation; ties at 1 stay distinguishable
    return np.mean(np.expm1(-(e * e) / (2.0 * sigma * sigma)), axis=axis)


def mcc_objective(dataset: Dataset, w: Param, sigma: float) -> float:
    """Empirical correntropy ``mean(exp(-e^2 / (2 sigma^2)))``, in (0, 1]."""
    if not sigma > 0:
        raise ValueError("kernel width must be positive")
    e = residuals(dataset, w)
    return float(np.mean(np.exp(-(e * e) / (2.0 * sigma * sigma))))


def mcc_gradient(dataset: Dataset, w: Param, sigma: float) -> Param:
    if not sigma > 0:
        raise ValueError("kernel width must be positive")
    e = residuals(dataset, w)
    ge = np.exp(-(e * e) / (2.0 * sigma * sigma)) * e
    scale = 1.0 / (dataset.n * sigma * sigma)
    if _is_scalar(dataset):
        return float(scale * (ge @ dataset.x_obs))
    return scale * (dataset.x_obs_rows.T @ ge)


def _scalar_deficits(x: np.ndarray, d: np.ndarray, ws: np.ndarray, sigma: float,
                     chunk: int = 2_000_000) -> np.ndarray:
    """Objective deficit at each candidate in ``ws`` (scalar parameter)."""
    out = np.empty(ws.shape[0])
    step = max(1, chunk // max(1, x.shape[0]))
    for s in range(0, ws.shape[0], step):
        blk = ws[s:s + step]
        e = d[None, :] - blk[:, None] * x[None, :]
        out[s:s + step] = _deficit(e, sigma, axis=1)
    return out


def _vector_deficits(X: np.ndarray, d: np.ndarray, W: np.ndarray, sigma: float) -> np.ndarray:
    e = d[:, None] - X @ W.T
    return _deficit(e, sigma, axis=0)


def default_search_window(dataset: Dataset) -> tuple[float, float]:
    """``[-10 s, 10 s]`` with ``s = max(1, |w_MSE|)`` (largest component for vectors)."""
    try:
        w = np.asarray(mse_estimate(dataset).w_hat)
        s = max(1.0, float(np.max(np.abs(w))))
    except EstimationError:
        s = 1.0
    return -10.0 * s, 10.0 * s


def _window(dataset: Dataset, config: MCCConfig) -> tuple[float, float]:
    lo, hi = config.search_lo, config.search_hi
    if lo is None or hi is None:
        dlo, dhi = default_search_window(dataset)
        lo = dlo if lo is None else lo
        hi = dhi if hi is None else hi
    if not lo < hi:
        raise ValueError("search window is empty")
    return lo, hi


def golden_section_max(f, a: float, b: float, tol: float, max_iters: int = 200):
    """Maximize a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x), iterations)``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    e = a + invphi * (b - a)
    fc, fe = f(c), f(e)
    it = 0
    while b - a > tol and it < max_iters:
        it += 1
        if fc >= fe:
            b, e, fe = e, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, e, fe
            e = a + invphi * (b - a)
            fe = f(e)
    return (c, fc, it) if fc >= fe else (e, fe, it)


def _mcc_result(dataset: Dataset, w, sigma: float, **kw) -> EstimateResult:
    w = _pack(dataset, w)
    return EstimateResult("mcc", w, mcc_objective(dataset, w, sigma), residuals(dataset, w), **kw)


def _fixed_point_run(dataset: Dataset, w, config: MCCConfig):
    """One fixed-point trajectory; returns ``(w, iterations, converged)`` or None on underflow."""
    sigma2 = 2.0 * config.sigma * config.sigma
    d = dataset.d
    if _is_scalar(dataset):
        x = dataset.x_obs
        w = float(w)
        for it in range(1, config.max_iters + 1):
            e = d - w * x
            g = np.exp(-(e * e) / sigma2)
            den = float(g @ (x * x))
            if not den > 0.0 or not math.isfinite(den):
                return None
            w_new = float(g @ (x * d)) / den
            step = abs(w_new - w)
            w = w_new
            if step < config.tol:
                return w, it, True
        return w, config.max_iters, False

    X = dataset.x_obs_rows
    w = np.asarray(w, dtype=float)
    for it in range(1, config.max_iters + 1):
        e = d - X @ w
        g = np.exp(-(e * e) / sigma2)
        if not np.any(g > 0.0):
            return None
        Xg = X * g[:, None]
        A = Xg.T @ X
        try:
            if np.linalg.cond(A) > 1e14:
                return None
            w_new = np.linalg.solve(A, Xg.T @ d)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(w_new)):
            return None
        step = float(np.max(np.abs(w_new - w)))
        w = w_new
        if step < config.tol:
            return w, it, True
    return w, config.max_iters, False


def _start_points(dataset: Dataset, config: MCCConfig) -> list:
    starts = []
    for make in (lad_estimate, mse_estimate):
        try:
            starts.append(make(dataset).w_hat)
        except EstimationError:
            starts.append(None)
    if _is_scalar(dataset):
        lo, hi = _window(dataset, config)
        coarse = np.linspace(lo, hi, config.coarse_points)
        vals = _scalar_deficits(dataset.x_obs, dataset.d, coarse, config.sigma)
        starts.append(float(coarse[int(np.argmax(vals))]))
    return starts[: config.multistart]


def _multistart(dataset: Dataset, config: MCCConfig, run) -> EstimateResult:
    best = None
    tried = 0
    for w_init in _start_points(dataset, config):
        if w_init is None:
            continue
        tried += 1
        out = run(dataset, w_init, config)
        if out is None:
            continue
        w, its, conv = out
        score = float(_deficit(residuals(dataset, w), config.sigma))
        if best is None or score > best[0]:
            best = (score, w, its, conv)
    if best is None:
        raise EstimationError("MCC: every start failed (weighted denominator underflow)")
    _, w, its, conv = best
    return _mcc_result(dataset, w, config.sigma, iterations=its, converged=conv, starts_tried=tried)


def mcc_estimate_fixed_point(dataset: Dataset, config: MCCConfig) -> EstimateResult:
    """Fixed-point iteration ``w <- sum(g x d) / sum(g x^2)`` (weighted normal equations for vectors).

    Starts from LAD, MSE and the best point of a coarse grid (scalar only);
    the highest-objective end point wins.
    """
    return _multistart(dataset, config, _fixed_point_run)


def _gradient_run(dataset: Dataset, w, config: MCCConfig):
    X = dataset.x_obs.reshape(-1, 1) if _is_scalar(dataset) else dataset.x_obs_rows
    lip = float(np.linalg.eigvalsh(X.T @ X / dataset.n)[-1]) / config.sigma**2
    if not lip > 0:
        return None
    eta = 1.0 / lip
    w = np.atleast_1d(np.asarray(w, dtype=float)).copy()
    pack = (lambda v: float(v[0])) if _is_scalar(dataset) else (lambda v: v)
    for it in range(1, config.max_iters + 1):
        step = eta * np.atleast_1d(mcc_gradient(dataset, pack(w), config.sigma))
        w = w + step
        if float(np.max(np.abs(step))) < config.tol:
            return pack(w), it, True
    return pack(w), config.max_iters, False


def mcc_estimate_gradient_ascent(dataset: Dataset, config: MCCConfig) -> EstimateResult:
    """Plain gradient ascent with step ``sigma^2 / lambda_max(X'X / n)``, same starts as fixed point."""
    return _multistart(dataset, config, _gradient_run)


def mcc_estimate_grid(dataset: Dataset, config: MCCConfig) -> EstimateResult:
    """Dense grid over the search window, then golden-section refinement.

    The ``grid_refine`` best grid points are each refined inside their
    neighbouring bracket.  ``info["at_boundary"]`` flags a maximum on the
    window edge.
    """
    if not _is_scalar(dataset):
        raise EstimationError("grid solver supports scalar parameters only")
    lo, hi = _window(dataset, config)
    x, d, sigma = dataset.x_obs, dataset.d, config.sigma
    pts = np.linspace(lo, hi, config.grid_points)
    vals = _scalar_deficits(x, d, pts, sigma)
    order = np.argsort(-vals, kind="stable")
    at_boundary = int(order[0]) in (0, pts.size - 1)

    f = lambda w: float(_deficit(d - w * x, sigma))
    best = (float(vals[order[0]]), float(pts[order[0]]))
    iters = 0
    for k in order[: config.grid_refine]:
        k = int(k)
        a, b = pts[max(k - 1, 0)], pts[min(k + 1, pts.size - 1)]
        w, fw, its = golden_section_max(f, float(a), float(b), config.tol)
        iters += its
        if fw > best[0]:
            best = (fw, w)
    return _mcc_result(dataset, best[1], sigma, iterations=iters, converged=not at_boundary,
                       starts_tried=min(config.grid_refine, pts.size),
                       info={"at_boundary": at_boundary, "window": (lo, hi)})


def mcc_estimate_eda(dataset: Dataset, config: MCCConfig,
                     rng: Optional[np.random.Generator] = None) -> EstimateResult:
    """Univariate Gaussian estimation-of-distribution search.

    Population starts uniform in the search box; each generation refits a
    per-coordinate Gaussian to the elites.  Stops early once every
    coordinate's variance sits at the floor.  Returns the best individual seen.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    lo, hi = _window(dataset, config)
    p = dataset.p
    scalar = _is_scalar(dataset)
    score = (lambda P: _scalar_deficits(dataset.x_obs, dataset.d, P[:, 0], config.sigma)) if scalar \
        else (lambda P: _vector_deficits(dataset.x_obs_rows, dataset.d, P, config.sigma))

    pop = rng.uniform(lo, hi, size=(config.eda_population, p))
    best_val, best_w = -np.inf, None
    gen = 0
    for gen in range(1, config.eda_generations + 1):
        vals = score(pop)
        order = np.argsort(-vals, kind="stable")
        if vals[order[0]] > best_val:
            best_val, best_w = float(vals[order[0]]), pop[order[0]].copy()
        elites = pop[order[: config.eda_elites]]
        mean = elites.mean(axis=0)
        var = np.maximum(elites.var(axis=0), config.eda_variance_floor)
        if np.all(var <= config.eda_variance_floor):
            break
        pop = rng.normal(mean, np.sqrt(var), size=(config.eda_population, p))
    converged = gen < config.eda_generations
    return _mcc_result(dataset, best_w, config.sigma, iterations=gen, converged=converged,
                       starts_tried=1, info={"best_deficit": best_val})


def mcc_estimate_global(dataset: Dataset, config: MCCConfig,
                        rng: Optional[np.random.Generator] = None) -> EstimateResult:
    """Best of fixed-point multistart and an EDA run polished by fixed point.

    Used where a grid is infeasible (vector parameters): local starts from
    LAD or MSE can sit in an attenuated basin that only a global search escapes.
    """
    candidates = []
    try:
        candidates.append(mcc_estimate_fixed_point(dataset, config))
    except EstimationError:
        pass
    eda = mcc_estimate_eda(dataset, config, rng=rng)
    candidates.append(eda)
    polished = _fixed_point_run(dataset, eda.w_hat, config)
    if polished is not None:
        w, its, conv = polished
        candidates.append(_mcc_result(dataset, w, config.sigma, iterations=eda.iterations + its,
                                      converged=conv))
    best = max(candidates, key=lambda r: float(_deficit(r.residuals, config.sigma)))
    best.starts_tried = len(candidates)
    return best


def mcc_estimate(dataset: Dataset, config: MCCConfig,
                 rng: Optional[np.random.Generator] = None) -> EstimateResult:
    if config.solver == "fixed-point":
        return mcc_estimate_fixed_point(dataset, config)
    if config.solver == "grid":
        return mcc_estimate_grid(dataset, config)
    if config.solver == "eda":
        return mcc_estimate_eda(dataset, config, rng=rng)
    return mcc_estimate_gradient_ascent(dataset, config)
