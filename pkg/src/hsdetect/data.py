"""Dataset ingestion, synthetic backgrounds and experiment configuration."""

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import linalg
from .distributions import BackgroundModel, Family, ModelKind
from .errors import AsymmetryError, ConfigError, DimensionMismatch, ParseError

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

__all__ = [
    "DatasetBundle",
    "ExperimentConfig",
    "read_vector",
    "read_matrix",
    "load_bundle",
    "synthetic_bundle",
    "ar1_covariance",
    "smooth_signature",
    "background_profile",
    "load_config",
    "config_from_dict",
]

_ASYM_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    t: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    provenance: dict

    def __post_init__(self):
        p = np.size(self.t)
        if np.size(self.mu) != p or np.shape(self.sigma) != (p, p):
            raise DimensionMismatch(
                f"t has p={p}, mu has {np.size(self.mu)}, sigma is {np.shape(self.sigma)}")
        linalg.cholesky(self.sigma)

    @property
    def p(self):
        return np.size(self.t)


# -- file readers -----------------------------------------------------------

def _parse_cell(text, path, line, col):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(path, line, col, f"cannot parse {text.strip()!r} as a number") from None
    if not math.isfinite(value):
        raise ParseError(path, line, col, f"non-finite value {text.strip()!r}")
    return value


def _rows(path):
    path = str(path)
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, [_parse_cell(cell, path, lineno, col)
                               for col, cell in enumerate(line.split(","), start=1)]


def read_vector(path):
    """Single-column CSV: one real per line, ``#`` starts a comment."""
    values = []
    for lineno, row in _rows(path):
        if len(row) != 1:
            raise ParseError(str(path), lineno, 2, f"expected 1 value, got {len(row)}")
        values.append(row[0])
    if not values:
        raise ParseError(str(path), 0, 0, "no values")
    return np.array(values)


def read_matrix(path, ncols=None):
    """Comma separated rows of reals, all of the same length."""
    rows = []
    for lineno, row in _rows(path):
        width = ncols if ncols is not None else (len(rows[0]) if rows else len(row))
        if len(row) != width:
            raise ParseError(str(path), lineno, min(len(row), width) + 1,
                             f"expected {width} values, got {len(row)}")
        rows.append(row)
    if not rows:
        raise ParseError(str(path), 0, 0, "no rows")
    return np.array(rows)


def _symmetrize(sigma, path):
    scale = max(np.max(np.abs(sigma)), 1e-300)
    asym = np.max(np.abs(sigma - sigma.T)) / scale
    if asym > _ASYM_TOL:
        raise AsymmetryError(f"{path}: relative asymmetry {asym:.3g} exceeds {_ASYM_TOL}")
    return 0.5 * (sigma + sigma.T)


def load_bundle(t_path, mu_path, sigma_path):
    """Read signature, background mean and covariance from CSV files."""
    t = read_vector(t_path)
    mu = read_vector(mu_path)
    p = t.size
    if mu.size != p:
        raise DimensionMismatch(f"{mu_path}: mean has {mu.size} values, signature has {p}")
    sigma = read_matrix(sigma_path)
    if sigma.shape != (p, p):
        raise DimensionMismatch(f"{sigma_path}: covariance is {sigma.shape}, expected {(p, p)}")
    sigma = _symmetrize(sigma, sigma_path)
    return DatasetBundle(t, mu, sigma, {"kind": "files", "t": str(t_path),
                                        "mu": str(mu_path), "sigma": str(sigma_path)})


# -- synthetic data -----------------------------------------------------------

def ar1_covariance(p, rho):
    """Toeplitz matrix with entries ``rho ** |i - j|``."""
    k = np.arange(p)
    return rho ** np.abs(k[:, None] - k[None, :]).astype(float)


def smooth_signature(p):
    """Smooth positive spectral profile with unit Euclidean norm."""
    x = np.linspace(0.0, 1.0, p)
    t = 1.0 + 0.8 * np.sin(2.5 * np.pi * x) + 0.6 * x
    return t / np.linalg.norm(t)


def background_profile(p):
    """Smooth positive background shape (unit Euclidean norm) distinct from the signature."""
    x = np.linspace(0.0, 1.0, p)
    mu = 1.0 + 0.5 * np.cos(np.pi * x)
    return mu / np.linalg.norm(mu)


def synthetic_bundle(p, rho=0.9, mu_level=0.0, sigma_scale=1.0):
    """Smooth unit-norm signature, mean ``mu_level * profile`` and covariance
    ``sigma_scale**2`` times an AR(1) Toeplitz matrix."""
    if not -1 < rho < 1:
        raise ConfigError("rho", f"must lie in (-1, 1), got {rho}")
    if not sigma_scale > 0:
        raise ConfigError("sigma_scale", f"must be > 0, got {sigma_scale}")
    return DatasetBundle(smooth_signature(p), mu_level * background_profile(p),
                         sigma_scale ** 2 * ar1_covariance(p, rho),
                         {"kind": "synthetic", "rho": rho, "mu_level": mu_level,
                          "sigma_scale": sigma_scale})


# -- configuration -------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """Monte-Carlo experiment description (flat key/value file)."""

    p: int = 16
    n: int = 40
    family: str = "student"
    nu: float | None = None
    t_source: str = "synthetic"
    rho: float = 0.9
    mu_level: float = 0.0
    sigma_scale: float = 1.0
    t_path: str | None = None
    mu_path: str | None = None
    sigma_path: str | None = None
    truth: str = "replacement"
    alpha: float = 0.05
    beta: float = 1.0
    beta_grid: list = field(default_factory=lambda: [0.7, 0.8, 0.9, 1.0, 1.1])
    detectors: list = field(default_factory=lambda: ["kelly", "acute", "spade"])
    trials_h0: int = 10000
    trials_h1: int = 10000
    seed: int = 0
    operating_point: str = "fixed_pd"
    operating_value: float = 0.5
    roc_points: int = 0
    chunk: int = 1024

    def validate(self):
        if self.p < 1:
            raise ConfigError("p", f"must be >= 1, got {self.p}")
        if self.n <= self.p:
            raise ConfigError("n", f"must exceed p={self.p}, got {self.n}")
        if self.family not in {f.value for f in Family}:
            raise ConfigError("family", f"unknown family {self.family!r}")
        if self.family == Family.STUDENT.value:
            if self.nu is None:
                raise ConfigError("nu", "required when family = 'student'")
            if not self.nu > 2:
                raise ConfigError("nu", f"must be > 2 for the student family, got {self.nu}")
        if self.t_source not in ("synthetic", "file"):
            raise ConfigError("t_source", f"must be 'synthetic' or 'file', got {self.t_source!r}")
        if self.t_source == "file":
            for key in ("t_path", "mu_path", "sigma_path"):
                if not getattr(self, key):
                    raise ConfigError(key, "required when t_source = 'file'")
        if self.truth not in {m.value for m in ModelKind}:
            raise ConfigError("truth", f"unknown model {self.truth!r}")
        if self.truth == "replacement" and not self.alpha < 1:
            raise ConfigError("alpha", "replacement truth needs alpha < 1")
        if not self.beta > 0:
            raise ConfigError("beta", f"must be > 0, got {self.beta}")
        if not self.beta_grid:
            raise ConfigError("beta_grid", "must be non-empty")
        for b in self.beta_grid:
            if not (isinstance(b, (int, float)) and b > 0):
                raise ConfigError("beta_grid", f"entries must be > 0, got {b!r}")
        for d in self.detectors:
            if d not in ("kelly", "acute", "spade"):
                raise ConfigError("detectors", f"unknown detector {d!r}")
        if self.trials_h0 < 1:
            raise ConfigError("trials_h0", "must be >= 1")
        if self.trials_h1 < 1:
            raise ConfigError("trials_h1", "must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
        if self.operating_point not in ("fixed_pfa", "fixed_pd"):
            raise ConfigError("operating_point", f"unknown {self.operating_point!r}")
        if not 0 < self.operating_value < 1:
            raise ConfigError("operating_value", "must lie in (0, 1)")
        if self.roc_points < 0:
            raise ConfigError("roc_points", "must be >= 0")
        if self.chunk < 1:
            raise ConfigError("chunk", "must be >= 1")
        return self

    def bundle(self, base_dir="."):
        if self.t_source == "file":
            base = Path(base_dir)
            return load_bundle(base / self.t_path, base / self.mu_path, base / self.sigma_path)
        return synthetic_bundle(self.p, self.rho, self.mu_level, self.sigma_scale)

    def background(self, bundle):
        if bundle.p != self.p:
            raise ConfigError("p", f"config p={self.p} but data has p={bundle.p}")
        nu = self.nu if self.nu is not None else math.inf
        return BackgroundModel(bundle.mu, bundle.sigma, nu, Family(self.family))

    def to_dict(self):
        return asdict(self)


_INT_KEYS = {"p", "n", "trials_h0", "trials_h1", "seed", "roc_points", "chunk"}
_FLOAT_KEYS = {"nu", "rho", "mu_level", "sigma_scale", "alpha", "beta", "operating_value"}


def config_from_dict(raw):
    """Build and validate an ExperimentConfig from parsed key/value pairs."""
    known = set(ExperimentConfig.__dataclass_fields__)
    values = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(key, "unknown configuration key")
        if key in _INT_KEYS:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(key, f"expected an integer, got {value!r}")
        elif key in _FLOAT_KEYS:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(key, f"expected a number, got {value!r}")
            value = float(value)
        elif key in ("beta_grid", "detectors") and not isinstance(value, list):
            raise ConfigError(key, "expected a list")
        values[key] = value
    if "beta_grid" in values:
        values["beta_grid"] = [float(b) if isinstance(b, (int, float)) and not isinstance(b, bool)
                               else b for b in values["beta_grid"]]
    return ExperimentConfig(**values).validate()


def load_config(path):
    """Parse a flat TOML key/value file into a validated config."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"{path}: {exc}") from None
    except OSError as exc:
        raise ConfigError("config", f"{path}: {exc.strerror}") from None
    for key, value in raw.items():
        if isinstance(value, dict):
            raise ConfigError(key, "nested tables are not supported")
    return config_from_dict(raw)
