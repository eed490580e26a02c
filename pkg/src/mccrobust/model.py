"""Errors-in-variables data model and contaminated dataset synthesis.

The scalar model observes ``x_obs = x + u`` and ``d = w0 * x + v``; the FIR
model does the same with tapped-delay regressor rows.  Input and output
noises follow a symmetric three-component Gaussian mixture.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

__all__ = [
    "GaussianMixtureSpec",
    "InputSpec",
    "ScalarEIVDataset",
    "VectorEIVDataset",
    "CleanSet",
    "sample_mixture",
    "sample_inputs",
    "generate_scalar_dataset",
    "generate_fir_dataset",
    "tapped_delay_rows",
    "clean_index_set",
    "write_dataset",
    "read_dataset",
    "DEFAULT_FIR_WEIGHTS",
]

DEFAULT_FIR_WEIGHTS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.4, 0.3, 0.2, 0.1)


@dataclass(frozen=True)
class GaussianMixtureSpec:
    """Symmetric mixture ``w/2 N(-mu, s2) + (1-w) N(0, s2) + w/2 N(mu, s2)``."""

    weight: float
    outlier_mean: float
    variance: float

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"mixture weight must lie in [0, 1], got {self.weight}")
        if not self.variance > 0.0:
            raise ValueError(f"mixture variance must be positive, got {self.variance}")
        if not self.outlier_mean >= 0.0:
            raise ValueError(f"outlier mean must be nonnegative, got {self.outlier_mean}")

    @property
    def mean(self) -> float:
        return 0.0

    @property
    def total_variance(self) -> float:
        return self.variance + self.weight * self.outlier_mean**2

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        s = math.sqrt(self.variance)
        norm = 1.0 / (s * math.sqrt(2.0 * math.pi))
        g = lambda m: norm * np.exp(-0.5 * ((t - m) / s) ** 2)
        return (self.weight / 2) * (g(-self.outlier_mean) + g(self.outlier_mean)) + (1 - self.weight) * g(0.0)


def _components(spec: GaussianMixtureSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    # -1, 0, +1 with probabilities w/2, 1-w, w/2
    w = spec.weight
    return rng.choice(3, size=n, p=[w / 2, 1.0 - w, w / 2]) - 1


def sample_mixture(spec: GaussianMixtureSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` independent samples from the mixture."""
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    k = _components(spec, n, rng)
    return k * spec.outlier_mean + rng.normal(0.0, math.sqrt(spec.variance), size=n)


def _sample_noise(spec: Optional[GaussianMixtureSpec], n: int, rng: np.random.Generator) -> np.ndarray:
    if spec is None:
        return np.zeros(n)
    return sample_mixture(spec, n, rng)


@dataclass(frozen=True)
class InputSpec:
    """True-input distribution.

    kind
        ``"two-interval"``: sign +-1 equiprobable, magnitude uniform on [1, 2].
        ``"gaussian"``: zero mean with the given ``variance``.
        ``"constant"``: random sign, fixed ``magnitude``.
    """

    kind: str = "two-interval"
    variance: float = 1.0
    magnitude: float = 1.0

    def __post_init__(self):
        if self.kind not in ("two-interval", "gaussian", "constant"):
            raise ValueError(f"unknown input distribution {self.kind!r}")
        if self.kind == "gaussian" and not self.variance > 0:
            raise ValueError("gaussian input variance must be positive")


def sample_inputs(spec: InputSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if spec.kind == "gaussian":
        return rng.normal(0.0, math.sqrt(spec.variance), size=n)
    sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    if spec.kind == "two-interval":
        return sign * rng.uniform(1.0, 2.0, size=n)
    return sign * spec.magnitude


@dataclass
class ScalarEIVDataset:
    x_obs: np.ndarray
    d: np.ndarray
    x: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    w0: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x_obs = np.asarray(self.x_obs, dtype=float)
        self.d = np.asarray(self.d, dtype=float)
        n = self.x_obs.shape[0]
        if n < 1 or self.x_obs.ndim != 1 or self.d.shape != (n,):
            raise ValueError("x_obs and d must be 1-D arrays of equal length >= 1")
        for name in ("x", "u", "v"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float)
                if arr.shape != (n,):
                    raise ValueError(f"{name} must have length {n}")
                setattr(self, name, arr)

    @property
    def n(self) -> int:
        return self.x_obs.shape[0]

    @property
    def p(self) -> int:
        return 1

    @property
    def regressors(self) -> np.ndarray:
        return self.x_obs

    @property
    def has_noises(self) -> bool:
        return self.u is not None and self.v is not None


@dataclass
class VectorEIVDataset:
    """Linear EIV data with ``p``-dimensional regressor rows.

    ``u_rows`` holds the input noise that entered each observed row, so the
    clean-set bookkeeping works for either noise placement.
    """

    x_obs_rows: np.ndarray
    d: np.ndarray
    x_rows: Optional[np.ndarray] = None
    u_rows: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    w0: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x_obs_rows = np.atleast_2d(np.asarray(self.x_obs_rows, dtype=float))
        self.d = np.asarray(self.d, dtype=float)
        n, p = self.x_obs_rows.shape
        if n < 1 or p < 1 or self.d.shape != (n,):
            raise ValueError("regressor rows must be (n, p) with d of length n")
        for name, shape in (("x_rows", (n, p)), ("u_rows", (n, p)), ("v", (n,)), ("w0", (p,))):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float)
                if arr.shape != shape:
                    raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
                setattr(self, name, arr)

    @property
    def n(self) -> int:
        return self.x_obs_rows.shape[0]

    @property
    def p(self) -> int:
        return self.x_obs_rows.shape[1]

    @property
    def regressors(self) -> np.ndarray:
        return self.x_obs_rows

    @property
    def has_noises(self) -> bool:
        return self.u_rows is not None and self.v is not None


Dataset = Union[ScalarEIVDataset, VectorEIVDataset]


def _spec_dict(spec: Optional[GaussianMixtureSpec]):
    return None if spec is None else asdict(spec)


def generate_scalar_dataset(
    w0: float,
    input_spec: InputSpec,
    u_spec: Optional[GaussianMixtureSpec],
    v_spec: Optional[GaussianMixtureSpec],
    n: int,
    seed: Union[int, np.random.SeedSequence, np.random.Generator],
) -> ScalarEIVDataset:
    """Synthesize a scalar EIV dataset; ``None`` noise specs mean exactly zero noise.

    Draw order is x, u, v, so a single-tap FIR dataset with the same seed
    and Gaussian input reproduces this one exactly.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = sample_inputs(input_spec, n, rng)
    u = _sample_noise(u_spec, n, rng)
    v = _sample_noise(v_spec, n, rng)
    meta = {
        "scenario": "scalar",
        "w0": float(w0),
        "n": n,
        "input": asdict(input_spec),
        "u_spec": _spec_dict(u_spec),
        "v_spec": _spec_dict(v_spec),
    }
    if isinstance(seed, (int, np.integer)):
        meta["seed"] = int(seed)
    return ScalarEIVDataset(x_obs=x + u, d=w0 * x + v, x=x, u=u, v=v, w0=float(w0), meta=meta)


def tapped_delay_rows(series: np.ndarray, p: int) -> np.ndarray:
    """Row ``i`` is ``[s[i], s[i-1], ..., s[i-p+1]]`` with zeros before time 0."""
    series = np.asarray(series, dtype=float)
    n = series.shape[0]
    rows = np.zeros((n, p))
    for k in range(p):
        rows[k:, k] = series[: n - k]
    return rows


def generate_fir_dataset(
    w0,
    n: int,
    input_variance: float,
    u_spec: Optional[GaussianMixtureSpec],
    v_spec: Optional[GaussianMixtureSpec],
    seed: Union[int, np.random.SeedSequence, np.random.Generator],
    noise_placement: str = "row",
) -> VectorEIVDataset:
    """Synthesize FIR EIV data with zero initial conditions.

    noise_placement
        ``"row"``: each sample's regressor gets its own noise vector; the
        mixture component is drawn once per sample and shifts every tap.
        ``"series"``: noise is added to the input series before the delay
        line, so overlapping rows share noise entries.
    """
    w0 = np.atleast_1d(np.asarray(w0, dtype=float))
    p = w0.shape[0]
    if p < 1 or w0.ndim != 1:
        raise ValueError("w0 must be a nonempty vector")
    if n < p:
        raise ValueError(f"n must be >= p ({p}), got {n}")
    if not input_variance > 0:
        raise ValueError("input variance must be positive")
    if noise_placement not in ("row", "series"):
        raise ValueError(f"unknown noise placement {noise_placement!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    x = rng.normal(0.0, math.sqrt(input_variance), size=n)
    x_rows = tapped_delay_rows(x, p)
    if noise_placement == "series":
        u = _sample_noise(u_spec, n, rng)
        u_rows = tapped_delay_rows(u, p)
    elif u_spec is None:
        u_rows = np.zeros((n, p))
    else:
        shift = _components(u_spec, n, rng) * u_spec.outlier_mean
        u_rows = shift[:, None] + rng.normal(0.0, math.sqrt(u_spec.variance), size=(n, p))
    v = _sample_noise(v_spec, n, rng)
    meta = {
        "scenario": "fir",
        "w0": w0.tolist(),
        "n": n,
        "p": p,
        "input_variance": float(input_variance),
        "noise_placement": noise_placement,
        "u_spec": _spec_dict(u_spec),
        "v_spec": _spec_dict(v_spec),
    }
    if isinstance(seed, (int, np.integer)):
        meta["seed"] = int(seed)
    return VectorEIVDataset(
        x_obs_rows=x_rows + u_rows,
        d=x_rows @ w0 + v,
        x_rows=x_rows,
        u_rows=u_rows,
        v=v,
        w0=w0,
        meta=meta,
    )


@dataclass
class CleanSet:
    indices: np.ndarray
    eps_u: float
    eps_v: float
    c: Optional[float]

    @property
    def m(self) -> int:
        return int(self.indices.shape[0])


def clean_index_set(dataset: Dataset, eps_u: float, eps_v: float) -> CleanSet:
    """Indices whose input and output noises are both within the thresholds.

    Ties count as clean.  For vector data a row is clean when every tap's
    input noise is within ``eps_u``, and ``c`` is the smallest Euclidean
    norm of a clean observed row.
    """
    if eps_u < 0 or eps_v < 0:
        raise ValueError("clean-set thresholds must be nonnegative")
    if not dataset.has_noises:
        raise ValueError("clean set requires the dataset's ground-truth noises (u, v)")
    if isinstance(dataset, VectorEIVDataset):
        u_mag = np.max(np.abs(dataset.u_rows), axis=1)
        x_mag = np.linalg.norm(dataset.x_obs_rows, axis=1)
    else:
        u_mag = np.abs(dataset.u)
        x_mag = np.abs(dataset.x_obs)
    mask = (u_mag <= eps_u) & (np.abs(dataset.v) <= eps_v)
    idx = np.flatnonzero(mask)
    c = float(np.min(x_mag[idx])) if idx.size else None
    return CleanSet(indices=idx, eps_u=float(eps_u), eps_v=float(eps_v), c=c)


# -- CSV + sidecar metadata -------------------------------------------------

def _fmt(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return format(float(value), ".17g")


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def write_dataset(dataset: Dataset, path) -> tuple[Path, Path]:
    """Write ``path`` (CSV) and ``path.meta.json`` (w0 and generation settings)."""
    path = Path(path)
    n = dataset.n
    if isinstance(dataset, ScalarEIVDataset):
        header = ["i", "x", "u", "v", "x_obs", "d"]
        cols = [dataset.x, dataset.u, dataset.v, dataset.x_obs, dataset.d]
    else:
        p = dataset.p
        header = ["i", "v", "d"]
        header += [f"x_{k}" for k in range(p)] + [f"u_{k}" for k in range(p)] + [f"x_obs_{k}" for k in range(p)]
        cols = [dataset.v, dataset.d]
        for mat in (dataset.x_rows, dataset.u_rows, dataset.x_obs_rows):
            cols += [None if mat is None else mat[:, k] for k in range(p)]
    lines = [",".join(header)]
    for i in range(n):
        lines.append(",".join([str(i)] + [_fmt(None if c is None else c[i]) for c in cols]))
    path.write_text("\n".join(lines) + "\n")

    meta = dict(dataset.meta)
    meta.setdefault("scenario", "scalar" if isinstance(dataset, ScalarEIVDataset) else "fir")
    w0 = dataset.w0
    meta["w0"] = None if w0 is None else (np.asarray(w0).tolist() if np.ndim(w0) else float(w0))
    meta["n"] = n
    mpath = _meta_path(path)
    mpath.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path, mpath


def _column(table: dict, name: str, n: int) -> Optional[np.ndarray]:
    raw = table.get(name)
    if raw is None or all(s == "" for s in raw):
        return None
    if any(s == "" for s in raw):
        raise ValueError(f"column {name!r} is partially empty")
    return np.array([float(s) for s in raw])


def read_dataset(path) -> Dataset:
    """Read a dataset CSV; the metadata sidecar is optional."""
    path = Path(path)
    text = path.read_text().strip().splitlines()
    if not text:
        raise ValueError(f"{path}: empty dataset file")
    header = [h.strip() for h in text[0].split(",")]
    rows = [line.split(",") for line in text[1:] if line.strip()]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    if any(len(r) != len(header) for r in rows):
        raise ValueError(f"{path}: ragged rows")
    table = {h: [r[j].strip() for r in rows] for j, h in enumerate(header)}
    n = len(rows)
    mpath = _meta_path(path)
    meta = json.loads(mpath.read_text()) if mpath.exists() else {}
    w0 = meta.get("w0")

    if "x_obs" in header:
        for req in ("x_obs", "d"):
            if _column(table, req, n) is None:
                raise ValueError(f"{path}: missing required column {req!r}")
        return ScalarEIVDataset(
            x_obs=_column(table, "x_obs", n),
            d=_column(table, "d", n),
            x=_column(table, "x", n),
            u=_column(table, "u", n),
            v=_column(table, "v", n),
            w0=None if w0 is None else float(w0),
            meta=meta,
        )
    p = sum(1 for h in header if h.startswith("x_obs_"))
    if p == 0 or _column(table, "d", n) is None:
        raise ValueError(f"{path}: not a recognised dataset layout")

    def block(prefix):
        cols = [_column(table, f"{prefix}_{k}", n) for k in range(p)]
        return None if any(c is None for c in cols) else np.column_stack(cols)

    return VectorEIVDataset(
        x_obs_rows=block("x_obs"),
        d=_column(table, "d", n),
        x_rows=block("x"),
        u_rows=block("u"),
        v=_column(table, "v", n),
        w0=None if w0 is None else np.asarray(w0, dtype=float),
        meta=meta,
    )
