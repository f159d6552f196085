"""Config-driven experiments producing CSV tables.

Each runner returns ``(header, rows)``; ``write_csv`` renders them with LF
line endings and ``repr`` floats so identical configs give identical bytes.
Repetition ``r`` draws from ``derive_seed(master, r)``, which is the value
written to the ``seed`` column; the population proxy and test points use
fixed reserved keys, so a row is replayed from the config plus its seed.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import glm, ihvp, influence, mestim, rng, subset, synthdata
from .config import ExperimentConfig
from .errors import ConfigError
from .glm import DataPoint, Dataset, LossModel
from .ihvp import HvpOracle

POPULATION_KEY = 1 << 40
TEST_KEY = (1 << 40) + 1
DEFAULT_RIDGE = 1e-3
REMOVED_LISTED = 10


@dataclass(frozen=True)
class Table:
    header: tuple[str, ...]
    rows: list[tuple]

    def column(self, name: str) -> list:
        j = self.header.index(name)
        return [r[j] for r in self.rows]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            raise ValueError(f"non-finite value {v!r} in output")
        return repr(v)
    return str(v)


def render_csv(table: Table) -> str:
    buf = io.StringIO()
    buf.write(",".join(table.header) + "\n")
    for row in table.rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_csv(table: Table, path) -> None:
    Path(path).write_bytes(render_csv(table).encode("utf-8"))


# ---------------------------------------------------------------- data sources


class Source:
    """Where datasets come from: a simulator or a CSV file."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        d = cfg.data
        self.kind = cfg.source
        if self.kind == "csv":
            path = Path(d["path"])
            if not path.is_absolute():
                path = cfg.base_dir / path
            schema = synthdata.CsvSchema(tuple(d["features"]), d["response"], d["family"], d.get("n_classes", 2))
            self.full = synthdata.load_csv(path, schema)
            self.family = self.full.family
        else:
            self.full = None
            self.family = "least_squares" if self.kind == "linear" else "logistic"
        self.model = glm.model_for(
            self.full if self.full is not None else Dataset(np.zeros((1, 1)), np.ones(1), self.family),
            d.get("ridge", DEFAULT_RIDGE),
        )

    def spec(self, n: int, seed: int) -> synthdata.SimSpec:
        d = self.cfg.data
        return synthdata.SimSpec(
            self.kind, n, d.get("p", 9), d.get("theta_true"), d.get("contam_prob", 0.1),
            d.get("noise_sd_clean", 1.0), d.get("noise_sd_contam", 10.0), seed,
        )

    def sample(self, n: int, seed: int) -> Dataset:
        """Size-``n`` sample; prefixes of larger samples with the same seed."""
        if self.full is None:
            return synthdata.simulate(self.spec(n, seed))
        if n > self.full.n:
            raise ConfigError(f"requested {n} rows but the file has {self.full.n}")
        perm = np.argsort(rng.uniform(seed, self.full.n), kind="stable")
        return self.full.take(perm[:n])

    def population(self, max_n: int) -> Dataset:
        if self.full is not None:
            return self.full
        N = self.cfg.population or self.cfg.population_factor * max_n
        return synthdata.simulate(self.spec(N, rng.derive_seed(self.cfg.seed, POPULATION_KEY)))

    def target_point(self, data: Dataset) -> DataPoint:
        """The point z whose influence is measured."""
        if "z_index" in self.cfg.data:
            j = self.cfg.data["z_index"]
            if not 0 <= j < data.n:
                raise ConfigError(f"z_index {j} out of range for {data.n} points")
            return data.point(j)
        if self.full is None:
            return synthdata.outlier_point(self.spec(1, 0))
        return self.full.point(0)

    def test_points(self, k: int) -> list[DataPoint]:
        seed = rng.derive_seed(self.cfg.seed, TEST_KEY)
        if self.full is None:
            d = synthdata.simulate(self.spec(k, seed))
        else:
            d = self.full.take(rng.indices(seed, self.full.n, k))
        return [d.point(i) for i in range(k)]


def _map(cfg: ExperimentConfig, fn, items) -> list:
    """Ordered map; parallel when threads > 1, results always in input order."""
    if cfg.threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(fn, items))


def _require_population(cfg: ExperimentConfig, src: Source, pop: Dataset) -> None:
    if src.full is None and pop.n < 10 * max(cfg.n_grid):
        raise ConfigError(f"population proxy {pop.n} is smaller than 10x max n = {10 * max(cfg.n_grid)}")


# ---------------------------------------------------------------- convergence


def calibrated_bound(mean_err: np.ndarray, grid, bp: influence.BoundParams | None) -> np.ndarray:
    """Bound curve scaled to touch the empirical mean at the smallest n.

    The statistical bound is proportional to 1/n, so after calibration only its
    shape survives; when R = 0 makes the bound vanish the 1/n shape is used directly.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if bp is not None and bp.R > 0:
        raw = np.array([influence.theorem1_bound(bp, int(n)).value for n in grid])
    else:
        raw = 1.0 / grid
    return mean_err[0] * raw / raw[0]


def run_convergence(cfg: ExperimentConfig) -> Table:
    src = Source(cfg)
    model = src.model
    grid = cfg.n_grid
    pop = src.population(max(grid))
    _require_population(cfg, src, pop)
    proxy = influence.PopulationProxy.build(model, pop)
    z = src.target_point(pop)
    I_pop = influence.influence_population(proxy, z).influence
    solver_cfg = cfg.solver_config()

    def one_rep(r: int):
        seed = rng.derive_seed(cfg.seed, r)
        data = src.sample(max(grid), seed)
        errs = []
        for n in grid:
            sub = data.head(n)
            fit = mestim.fit(model, sub)
            I_n = influence.influence_empirical(model, sub, fit, z, solver_cfg).influence
            errs.append(influence.hstar_norm_error(I_n, I_pop, proxy.hessian))
        return seed, errs

    results = _map(cfg, one_rep, range(cfg.repetitions))
    E = np.array([errs for _, errs in results])  # reps x grid
    mean = E.mean(axis=0)
    se = E.std(axis=0, ddof=1) / math.sqrt(E.shape[0]) if E.shape[0] > 1 else np.zeros(len(grid))
    bp = influence.bound_params_from_proxy(proxy)
    bound = calibrated_bound(mean, grid, bp)

    rows = []
    for a, n in enumerate(grid):
        for r, (seed, errs) in enumerate(results):
            rows.append((n, r, errs[a], bound[a], seed))
    for a, n in enumerate(grid):
        rows.append((n, "mean", mean[a], bound[a], cfg.seed))
        rows.append((n, "se", se[a], bound[a], cfg.seed))
    return Table(("n", "rep", "err_sq", "bound", "seed"), rows)


# ---------------------------------------------------------------- solvers


def budget_config(base: ihvp.SolverConfig, budget: int, n: int, dim: int) -> ihvp.SolverConfig | None:
    """Solver settings spending at most ``budget`` oracle calls; None if too small."""
    m = base.method
    if m == "cg":
        k = budget // n
        return replace(base, max_iters=k) if k >= 1 else None
    if m == "sgd":
        return replace(base, max_iters=budget)
    if m == "lissa":
        k = budget // base.repeats
        return replace(base, max_iters=k) if k >= 1 else None
    if m == "svrg":
        k = budget // (n + 2 * (base.epoch_len or 2 * n))
        return replace(base, epochs=k) if k >= 1 else None
    if m == "accel_svrg":
        if base.catalyst_mu is None and (base.catalyst_kappa is None or base.catalyst_beta is None):
            budget -= dim * n  # the Krylov sweep that estimates mu
        k = budget // (base.inner_epochs * (n + 2 * (base.epoch_len or 2 * n)))
        return replace(base, epochs=k) if k >= 1 else None
    if m == "arnoldi":
        k = min(budget // n, dim)
        return replace(base, krylov_dim=k, rank=k) if k >= 1 else None
    return base


def _decay(cfg: ExperimentConfig):
    text = cfg.cost.get("decay")
    if not text:
        return None
    kind, _, rate = text.partition(":")
    try:
        return kind.strip(), float(rate)
    except ValueError:
        raise ConfigError(f"[cost] decay must look like poly:2 or exp:0.5, got {text!r}") from None


def run_solvers(cfg: ExperimentConfig) -> Table:
    src = Source(cfg)
    model = src.model
    n = cfg.data.get("n", 200)
    seed = rng.derive_seed(cfg.seed, 0)
    data = src.sample(n, seed) if src.full is None else src.full
    n = data.n
    fit = mestim.fit(model, data)
    z = src.target_point(data)
    v = model.grad(z, fit.theta)
    damping = cfg.solver.get("damping", 0.0)
    oracle = HvpOracle.from_glm(model, data, fit.theta, damping)
    H = oracle.dense()
    dim = H.shape[0]
    u_star = ihvp.solve_exact(H, v, 0.0, n).u
    L = oracle.smoothness()
    kappa, _, _ = influence.condition_numbers_of(H, L)
    delta = 0.5 * float(u_star @ H @ u_star)
    sigma2 = ihvp.sgd_noise_sigma2(HvpOracle.from_glm(model, data, fit.theta, damping), H, u_star)
    eps = cfg.solver.get("eps", 1e-6)
    decay = _decay(cfg)

    methods = cfg.solver.get("methods") or ("exact", "cg", "sgd", "svrg", "accel_svrg", "arnoldi")
    budgets = cfg.solver.get("budgets") or tuple(n * k for k in (1, 2, 5, 10, 20, 50, 100))
    rows = []
    for method in methods:
        base = cfg.solver_config(method, damping=0.0)
        pred = _predicted(method, kappa, delta, sigma2, n, eps, decay, dim)
        if method == "exact":
            sol = ihvp.solve_exact(H, v, 0.0, n)
            rows.append((method, n * dim, sol.oracle_calls, ihvp.h_norm_sq_error(sol.u, u_star, H), pred, seed))
            continue
        for b in budgets:
            c = budget_config(base, b, n, dim)
            if c is None:
                continue
            o = oracle.with_shift(0.0)
            sol = ihvp.solve(o, v, c)
            rows.append((method, b, sol.oracle_calls, ihvp.h_norm_sq_error(sol.u, u_star, H), pred, seed))
    return Table(("method", "budget", "oracle_calls", "err_sq", "predict_cost", "seed"), rows)


def _predicted(method, kappa, delta, sigma2, n, eps, decay, dim) -> float:
    """Cost-formula value; LiSSA shares SGD's, Arnoldi without a decay law and
    the exact solve report the n * d cost of a full-rank factorization."""
    if method == "exact" or (method == "arnoldi" and decay is None):
        return float(n * dim)
    m = "sgd" if method == "lissa" else method
    return ihvp.predict_cost(m, max(kappa, 1.0), delta, sigma2, n, eps, decay)


# ---------------------------------------------------------------- subset


def run_subset(cfg: ExperimentConfig) -> Table:
    src = Source(cfg)
    model = src.model
    grid = cfg.n_grid
    alphas = cfg.subset.get("alpha_grid", (0.0, 0.05, 0.1))
    tests = src.test_points(cfg.subset.get("n_tests", 3))
    pop = src.population(max(grid))
    _require_population(cfg, src, pop)
    proxy = influence.PopulationProxy.build(model, pop)
    grads_h_pop = [model.grad(t, proxy.fit.theta) for t in tests]
    pop_scores = [subset.sif_scores(model, pop, proxy.fit, grad_h=g) for g in grads_h_pop]
    pop_sif = [[subset.superquantile(s, a) for a in alphas] for s in pop_scores]
    solver_cfg = cfg.solver_config()

    def one_rep(r: int):
        seed = rng.derive_seed(cfg.seed, r)
        data = src.sample(max(grid), seed)
        out = []
        for n in grid:
            sub = data.head(n)
            fit = mestim.fit(model, sub)
            for h, t in enumerate(tests):
                scores = subset.sif_scores(model, sub, fit, t, solver_cfg)
                for a, alpha in enumerate(alphas):
                    rep = subset.most_influential_subset(scores, alpha)
                    order = np.argsort(scores, kind="stable")[: len(rep.removed_indices)]
                    listed = " ".join(str(int(i)) for i in order[:REMOVED_LISTED])
                    err = (rep.sif_value - pop_sif[h][a]) ** 2
                    out.append((n, r, alpha, h, rep.sif_value, pop_sif[h][a], err, listed, seed))
        return out

    rows = [row for chunk in _map(cfg, one_rep, range(cfg.repetitions)) for row in chunk]
    rows.sort(key=lambda t: (t[0], t[1], t[3], t[2]))
    return Table(("n", "rep", "alpha", "h", "sif", "pop_sif", "err_sq", "removed", "seed"), rows)


# ---------------------------------------------------------------- thin wrappers


def _single_dataset(cfg: ExperimentConfig, src: Source) -> Dataset:
    if src.full is not None:
        return src.full
    return src.sample(cfg.data.get("n", 200), rng.derive_seed(cfg.seed, 0))


def run_fit(cfg: ExperimentConfig) -> Table:
    src = Source(cfg)
    data = _single_dataset(cfg, src)
    res = mestim.fit(src.model, data)
    return Table(("index", "theta"), [(j, float(t)) for j, t in enumerate(res.theta)])


def run_influence(cfg: ExperimentConfig) -> Table:
    src = Source(cfg)
    data = _single_dataset(cfg, src)
    fit = mestim.fit(src.model, data)
    z = src.target_point(data)
    rep = influence.influence_empirical(src.model, data, fit, z, cfg.solver_config())
    return Table(("index", "influence"), [(j, float(t)) for j, t in enumerate(rep.influence)])


def run_predict_cost(cfg: ExperimentConfig) -> Table:
    c = cfg.cost
    try:
        kappa, delta, sigma2, n, eps = c["kappa"], c["delta"], c.get("sigma2", 0.0), c["n"], c["eps"]
    except KeyError as exc:
        raise ConfigError(f"[cost] missing key {exc.args[0]!r}") from None
    decay = _decay(cfg)
    methods = c.get("methods") or (("cg", "sgd", "svrg", "accel_svrg") + (("lowrank",) if decay else ()))
    rows = []
    for m in methods:
        try:
            val = ihvp.predict_cost(m, kappa, delta, sigma2, n, eps, decay)
        except ValueError as exc:
            raise ConfigError(f"[cost] {m}: {exc}") from exc
        rows.append((m, kappa, delta, sigma2, n, eps, val))
    return Table(("method", "kappa", "delta", "sigma2", "n", "eps", "cost"), rows)


RUNNERS = {
    "convergence": run_convergence,
    "solvers": run_solvers,
    "subset": run_subset,
    "fit": run_fit,
    "influence": run_influence,
    "predict-cost": run_predict_cost,
}


def run(command: str, cfg: ExperimentConfig) -> Table:
    if cfg.command is not None and cfg.command != command:
        raise ConfigError(f"config is for {cfg.command!r}, not {command!r}")
    return RUNNERS[command](cfg)


def gnuplot_script(command: str, csv_path: str) -> str:
    """A gnuplot script plotting the CSV; log-log where it makes sense."""
    lines = ["set datafile separator ','", "set key autotitle columnhead", "set logscale xy"]
    if command == "convergence":
        lines += [
            "set xlabel 'n'", "set ylabel 'squared error'",
            f"plot '< grep mean {csv_path}' using 1:3 with linespoints title 'mean error', \\",
            f"     '< grep mean {csv_path}' using 1:4 with lines title 'calibrated bound'",
        ]
    elif command == "solvers":
        lines += [
            "set xlabel 'oracle calls'", "set ylabel 'squared H-norm error'",
            f"plot for [m in 'cg sgd lissa svrg accel_svrg arnoldi'] '< grep ^'.m.', {csv_path}' "
            "using 3:($4 + 1e-300) with linespoints title m",
        ]
    elif command == "subset":
        lines += [
            "set xlabel 'n'", "set ylabel 'squared error'",
            f"plot '{csv_path}' using 1:7 with points title 'subset influence error'",
        ]
    else:
        lines = ["set datafile separator ','", "set key autotitle columnhead",
                 f"plot '{csv_path}' using 1:2 with linespoints"]
    return "\n".join(lines) + "\n"
