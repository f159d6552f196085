"""Simulated datasets and CSV ingestion.

Every generator is a pure function of its spec and seed.  Each quantity
(features, contamination flags, noise, labels) draws from its own child
stream, laid out point by point, so the first ``n`` points of a size-``m``
simulation are exactly the size-``n`` simulation.

CSV format: comma separated, one header row, '.' decimal point, UTF-8.
Quoted fields are not supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng
from .errors import ParseError, SchemaMismatch
from .glm import FAMILIES, DataPoint, Dataset, sigmoid

SIM_KINDS = ("linear", "logistic")
DECAYS = ("poly", "exp", "flat")

# child-stream keys
_FEATURES, _FLAGS, _NOISE, _LABELS = 0, 1, 2, 3


def default_theta(p: int) -> np.ndarray:
    """Fixed true parameter: alternating signs, unit norm."""
    signs = np.where(np.arange(p) % 2 == 0, 1.0, -1.0)
    return signs / math.sqrt(p)


@dataclass(frozen=True)
class SimSpec:
    kind: str
    n: int
    p: int = 9
    theta_true: np.ndarray | None = field(default=None, compare=False)
    contam_prob: float = 0.1
    noise_sd_clean: float = 1.0
    noise_sd_contam: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SIM_KINDS:
            raise ValueError(f"kind must be one of {SIM_KINDS}")
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if not 0.0 <= self.contam_prob <= 1.0:
            raise ValueError("contam_prob must lie in [0, 1]")
        if not (self.noise_sd_clean > 0 and self.noise_sd_contam > 0):
            raise ValueError("noise standard deviations must be positive")
        theta = default_theta(self.p) if self.theta_true is None else np.asarray(self.theta_true, dtype=np.float64)
        if theta.shape != (self.p,):
            raise ValueError(f"theta_true must have length {self.p}")
        object.__setattr__(self, "theta_true", theta)

    @property
    def family(self) -> str:
        return "least_squares" if self.kind == "linear" else "logistic"


def simulate(spec: SimSpec) -> Dataset:
    """x ~ N(0, I); noise mu = N(0, sd_clean^2) or, with probability contam_prob,
    N(0, sd_contam^2).  Linear: y = x^T theta + mu.  Logistic: y = +1 with
    probability sigmoid(x^T theta + mu), else -1."""
    n, p = spec.n, spec.p
    X = rng.normal(rng.derive_seed(spec.seed, _FEATURES), n * p).reshape(n, p)
    contaminated = rng.uniform(rng.derive_seed(spec.seed, _FLAGS), n) < spec.contam_prob
    sd = np.where(contaminated, spec.noise_sd_contam, spec.noise_sd_clean)
    mu = sd * rng.normal(rng.derive_seed(spec.seed, _NOISE), n)
    eta = X @ spec.theta_true + mu
    if spec.kind == "linear":
        y = eta
    else:
        u = rng.uniform(rng.derive_seed(spec.seed, _LABELS), n)
        y = np.where(u < sigmoid(eta), 1.0, -1.0)
    return Dataset(X, y, spec.family)


def contamination_flags(spec: SimSpec) -> np.ndarray:
    return rng.uniform(rng.derive_seed(spec.seed, _FLAGS), spec.n) < spec.contam_prob


def outlier_point(spec: SimSpec, shift: float = 10.0) -> DataPoint:
    """Deterministic outlier used as the influence target z.

    The feature vector has norm 2 along the all-ones direction.  Linear:
    response displaced by ``shift`` from the regression line.  Logistic:
    label opposite to the sign of the true margin.
    """
    x = np.full(spec.p, 2.0 / math.sqrt(spec.p))
    eta = float(x @ spec.theta_true)
    if spec.kind == "linear":
        return DataPoint(x, eta + shift)
    return DataPoint(x, -1.0 if eta >= 0 else 1.0)


@dataclass(frozen=True)
class SpectrumSpec:
    decay: str
    p: int
    rate: float = 1.0  # beta for poly, nu for exp; ignored for flat
    scale: float = 1.0

    def __post_init__(self):
        if self.decay not in DECAYS:
            raise ValueError(f"decay must be one of {DECAYS}")
        if self.p < 1:
            raise ValueError("p must be positive")
        if self.decay != "flat" and not self.rate > 0:
            raise ValueError("decay rate must be positive")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def eigenvalues(self) -> np.ndarray:
        i = np.arange(1, self.p + 1, dtype=np.float64)
        if self.decay == "poly":
            return self.scale * i ** (-self.rate)
        if self.decay == "exp":
            return self.scale * np.exp(-self.rate * i)
        return np.full(self.p, self.scale)


def design_with_spectrum(spec: SpectrumSpec, n: int, seed: int) -> Dataset:
    """x_i = Lambda^{1/2} g_i, so E[x x^T] = diag(spec.eigenvalues()).

    Responses are zero; the result carries features only.
    """
    if n < spec.p:
        raise ValueError("need n >= p")
    G = rng.normal(rng.derive_seed(seed, _FEATURES), n * spec.p).reshape(n, spec.p)
    return Dataset(G * np.sqrt(spec.eigenvalues()), np.zeros(n), "least_squares")


# ---------------------------------------------------------------- CSV


@dataclass(frozen=True)
class CsvSchema:
    features: tuple[str, ...]
    response: str
    family: str
    n_classes: int = 2

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if not self.features:
            raise ValueError("schema needs at least one feature column")


def _parse_float(text: str, line: int, column: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise ParseError(line, column, f"not a number: {text!r}") from None
    if not math.isfinite(val):
        raise ParseError(line, column, f"non-finite value {text!r}")
    return val


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Read the declared columns; rows with an empty response are dropped and counted.

    Logistic responses coded {0, 1} are mapped to {-1, +1}.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise SchemaMismatch("missing header row")
    header = [h.strip() for h in lines[0].split(",")]
    if len(set(header)) != len(header):
        raise SchemaMismatch("duplicate column names in header")
    pos = {h: i for i, h in enumerate(header)}
    missing = [c for c in (*schema.features, schema.response) if c not in pos]
    if missing:
        raise SchemaMismatch(f"columns not in header: {missing}")
    fcols = [pos[c] for c in schema.features]
    rcol = pos[schema.response]

    rows, ys, dropped = [], [], 0
    for lineno, raw_line in enumerate(lines[1:], start=2):
        if not raw_line.strip():
            continue
        cells = raw_line.split(",")
        if len(cells) != len(header):
            raise ParseError(lineno, "", f"expected {len(header)} fields, found {len(cells)}")
        resp = cells[rcol].strip()
        if resp == "":
            dropped += 1
            continue
        rows.append([_parse_float(cells[j].strip(), lineno, header[j]) for j in fcols])
        ys.append(_parse_float(resp, lineno, schema.response))
    if not rows:
        raise SchemaMismatch("no rows with a response")

    y = np.array(ys)
    if schema.family == "logistic" and np.all((y == 0.0) | (y == 1.0)):
        y = 2.0 * y - 1.0
    return Dataset(np.array(rows), y, schema.family, schema.n_classes, dropped, tuple(schema.features))


def dump_csv(data: Dataset, path, feature_names=None, response: str = "y") -> None:
    """Write ``data`` in the format ``load_csv`` reads; values round-trip exactly."""
    names = feature_names or data.feature_names or tuple(f"x{j + 1}" for j in range(data.p))
    if len(names) != data.p:
        raise ValueError("one name per feature column")
    out = [",".join((*names, response))]
    for row, yv in zip(data.X, data.y):
        out.append(",".join(repr(float(v)) for v in (*row, yv)))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8", newline="\n")


def schema_for(data: Dataset, feature_names=None, response: str = "y") -> CsvSchema:
    names = feature_names or data.feature_names or tuple(f"x{j + 1}" for j in range(data.p))
    return CsvSchema(tuple(names), response, data.family, data.n_classes)


def bundled_path(name: str = "tiny_logistic.csv") -> Path:
    """Path of a CSV shipped with the package (``tiny_logistic.csv``: 10 rows,
    features age, dose, score, binary response outcome, plus one blank-response row)."""
    return Path(__file__).with_name("data") / name
