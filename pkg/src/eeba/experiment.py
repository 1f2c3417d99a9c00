"""Configuration-driven sweeps, Monte-Carlo validation and complexity reports.

A run draws ``num_channel_draws`` channels per (scenario, N_s), solves every
configured allocation at every SNR, and writes

* ``raw_rows.csv``: one row per (draw, SNR, solver);
* ``ee_vs_snr.csv`` / ``rate_vs_snr.csv``: means over draws;
* ``complexity.csv``: operation counts beside closed forms and published figures;
* ``validation.csv``: analytic-vs-empirical checks;
* ``manifest.json`` plus gnuplot ``.dat`` column files.

SNR is ``10 log10(p / sigma_n2)`` with ``p = 1``.  Every random stream is
seeded from ``(seed, scenario, N_s, draw, ...)`` so output does not depend on
the worker count.
"""

import csv
import dataclasses
import hashlib
import json
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy
import sklearn

from .allocation import (AllocationContext, SaConfig, count_report, fixed_allocation, solve_exhaustive,
                         solve_min_crlb, solve_qsearch, solve_sa)
from .channel import ArrayConfig, ScattererScenario, generate_channel
from .exceptions import ConfigError, EebaError, InfeasibleBudgetError
from .metrics import PowerModel, lemma1_approx, lemma1_remainder_bound, lemma2_approx, lemma2_slope_bound
from .quantization import DEFAULT_TABLE, uniform_distortion_table
from .transceiver import analytic_mse, make_combiner, monte_carlo_moments, pseudo_covariance_test

SOLVER_NAMES = ("fixed1", "fixed2", "es", "qsearch", "sa9", "sa5", "min_crlb")
DEFAULT_SOLVERS = ("fixed1", "fixed2", "es", "qsearch", "sa9", "sa5")
SA_RATES = {"sa9": 0.9, "sa5": 0.5}

RAW_COLUMNS = ("scenario", "N_s", "snr_db", "draw", "solver", "bits", "rate", "rate_q", "power_W", "ee",
               "surrogate", "runtime_ms", "complex_mults", "complex_adds", "real_mults", "real_adds",
               "objective_evals", "error")
MEAN_COLUMNS = ("scenario", "N_s", "snr_db", "solver", "{}_mean", "power_W_mean", "n_draws", "n_errors")
COMPLEXITY_FIELDS = ("complex_mults", "complex_adds", "real_mults", "real_adds")
COMPLEXITY_COLUMNS = (("solver", "N_s", "N_b", "feasible", "objective_evals")
                      + COMPLEXITY_FIELDS
                      + tuple(f"predicted_{k}" for k in COMPLEXITY_FIELDS)
                      + tuple(f"published_{k}" for k in COMPLEXITY_FIELDS)
                      + ("mismatch",))
VALIDATION_COLUMNS = ("check", "n_streams", "stream", "bits", "analytic", "empirical", "abs_error",
                      "rel_error", "bound", "passed")


def _sa_param_names():
    return {f.name for f in dataclasses.fields(SaConfig)} - {"r", "seed"}


@dataclasses.dataclass(frozen=True)
class ValidationConfig:
    n_streams: int = 4
    snr_db: float = 10.0
    aqnm_bits: tuple = (1, 2, 3, 4, 5)
    real_bits: tuple = (2, 3, 4, 5)
    pseudo_bits: tuple = (1, 2, 3, 4)
    mse_tol: float = 0.03
    real_mse_tol: float = 0.10
    cov_tol: float = 0.03


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    array: ArrayConfig = ArrayConfig()
    scenario: dict = dataclasses.field(default_factory=dict)
    scenarios: tuple = (1, 2)
    power: PowerModel = PowerModel()
    snr_db: tuple = tuple(range(-10, 31, 5))
    n_streams: tuple = (8, 12)
    max_bits: int = 4
    solvers: tuple = DEFAULT_SOLVERS
    sa_params: dict = dataclasses.field(default_factory=dict)
    num_channel_draws: int = 50
    mc_samples: int = 100_000
    pseudo_samples: int = 1_000_000
    seed: int = 0
    output_dir: str = "results"
    combiner: str = "ideal"
    record_runtime: bool = False
    run_validation: bool = True
    validation: ValidationConfig = ValidationConfig()

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("<root>", "configuration must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        for key in doc:
            if key not in known:
                raise ConfigError(key, "unknown field")
        kw = {}
        for key, sub in (("array", ArrayConfig), ("power", PowerModel), ("validation", ValidationConfig)):
            if key in doc:
                kw[key] = _build_section(key, sub, doc[key])
        if "scenario" in doc:
            sc = doc["scenario"]
            if not isinstance(sc, dict):
                raise ConfigError("scenario", "must be an object")
            if "num_dominant_scatterers" in sc:
                raise ConfigError("scenario.num_dominant_scatterers", "set via 'scenarios'")
            _build_section("scenario", ScattererScenario, sc)
            kw["scenario"] = dict(sc)
        for key in ("scenarios", "snr_db", "n_streams", "solvers"):
            if key in doc:
                val = doc[key]
                if not isinstance(val, list) or not val:
                    raise ConfigError(key, "must be a non-empty list")
                kw[key] = tuple(val)
        for key in ("max_bits", "num_channel_draws", "mc_samples", "pseudo_samples", "seed"):
            if key in doc:
                kw[key] = doc[key]
        for key in ("output_dir", "combiner"):
            if key in doc:
                kw[key] = doc[key]
        for key in ("record_runtime", "run_validation"):
            if key in doc:
                if not isinstance(doc[key], bool):
                    raise ConfigError(key, "must be true or false")
                kw[key] = doc[key]
        if "sa_params" in doc:
            kw["sa_params"] = doc["sa_params"]
        cfg = cls(**kw)
        cfg.check()
        return cfg

    @classmethod
    def from_file(cls, path):
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
        return cls.from_dict(doc)

    def check(self):
        for s in self.scenarios:
            if s not in (1, 2):
                raise ConfigError("scenarios", f"scenario {s!r} is not 1 or 2")
        for s in self.snr_db:
            if isinstance(s, bool) or not isinstance(s, (int, float)) or not np.isfinite(s):
                raise ConfigError("snr_db", f"{s!r} is not a finite number")
        limit = min(self.array.num_rx_antennas, self.array.num_tx_antennas)
        for n in self.n_streams:
            if isinstance(n, bool) or not isinstance(n, int) or not 1 <= n <= limit:
                raise ConfigError("n_streams", f"{n!r} must be an integer in [1, {limit}]")
        for s in self.solvers:
            if s not in SOLVER_NAMES:
                raise ConfigError("solvers", f"unknown solver {s!r}; choose from {', '.join(SOLVER_NAMES)}")
        for key in ("max_bits", "num_channel_draws", "mc_samples", "pseudo_samples"):
            val = getattr(self, key)
            if isinstance(val, bool) or not isinstance(val, int) or val < 1:
                raise ConfigError(key, "must be a positive integer")
        if self.max_bits > DEFAULT_TABLE.max_bits:
            raise ConfigError("max_bits", f"must be <= {DEFAULT_TABLE.max_bits}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed", "must be a non-negative integer")
        if self.combiner not in ("ideal", "hybrid"):
            raise ConfigError("combiner", "must be 'ideal' or 'hybrid'")
        if not isinstance(self.output_dir, str):
            raise ConfigError("output_dir", "must be a string")
        if not isinstance(self.sa_params, dict):
            raise ConfigError("sa_params", "must be an object keyed by solver name")
        allowed = _sa_param_names()
        for name, params in self.sa_params.items():
            if name not in SA_RATES:
                raise ConfigError(f"sa_params.{name}", "only sa9 and sa5 take parameters")
            for k, v in params.items():
                if k not in allowed:
                    raise ConfigError(f"sa_params.{name}.{k}", "unknown annealing parameter")
                try:
                    SaConfig(**{k: v})
                except (EebaError, TypeError) as exc:
                    raise ConfigError(f"sa_params.{name}.{k}", str(exc)) from None
        v = self.validation
        if v.n_streams > limit:
            raise ConfigError("validation.n_streams", f"must be <= {limit}")

    def to_dict(self):
        return dataclasses.asdict(self)

    def sha256(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()

    def scenario_for(self, n_dominant):
        return ScattererScenario(num_dominant_scatterers=n_dominant, **self.scenario)

    def power_for(self, n_streams):
        return self.power.with_streams(n_streams)

    def sa_config(self, name, seed):
        return SaConfig(r=SA_RATES[name], seed=seed, **self.sa_params.get(name, {}))


def _build_section(name, cls, values):
    if not isinstance(values, dict):
        raise ConfigError(name, "must be an object")
    fields = {f.name for f in dataclasses.fields(cls)}
    for key, val in values.items():
        if key not in fields:
            raise ConfigError(f"{name}.{key}", "unknown field")
        if isinstance(val, list):
            values = {**values, key: tuple(val)}
        try:
            cls(**{key: values[key]})
        except (EebaError, TypeError, ValueError) as exc:
            raise ConfigError(f"{name}.{key}", str(exc)) from None
    try:
        return cls(**values)
    except (EebaError, TypeError, ValueError) as exc:
        raise ConfigError(name, str(exc)) from None


def derive_seed(*keys):
    """Stable 63-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(2, np.uint64)[0] >> np.uint64(1))


def sigma_n2_for(snr_db):
    return 10.0 ** (-snr_db / 10.0)


def _bits_str(b):
    return "-".join(str(int(v)) for v in b)


def _solve(name, space, ctx, sa_cfg=None):
    if name == "es":
        return solve_exhaustive(space, ctx)
    if name == "qsearch":
        return solve_qsearch(space, ctx.qtable, ctx=ctx)
    if name in SA_RATES:
        return solve_sa(space, ctx.qtable, cfg=sa_cfg, ctx=ctx)
    if name == "min_crlb":
        return solve_min_crlb(space, ctx)
    return fixed_allocation(space, ctx, int(name[-1]))


def _error_row(base, solver, message):
    row = dict.fromkeys(RAW_COLUMNS, "")
    row.update(base, solver=solver, error=message)
    return row


def run_cell(cfg, scenario, n_streams, draw):
    """All SNRs and solvers for one channel draw."""
    base = {"scenario": scenario, "N_s": n_streams, "draw": draw}
    rows = []
    try:
        chan = generate_channel(cfg.array, cfg.scenario_for(scenario),
                                derive_seed(cfg.seed, scenario, n_streams, draw), n_streams=n_streams)
        comb = make_combiner(chan, cfg.combiner)
    except EebaError as exc:
        return [_error_row({**base, "snr_db": s}, name, f"{type(exc).__name__}: {exc}")
                for s in cfg.snr_db for name in cfg.solvers]
    pm = cfg.power_for(n_streams)
    for k, snr in enumerate(cfg.snr_db):
        cell = {**base, "snr_db": snr}
        ctx = AllocationContext(chan, comb, pm, p=1.0, sigma_n2=sigma_n2_for(snr), max_bits=cfg.max_bits)
        try:
            space = ctx.space()
        except InfeasibleBudgetError as exc:
            rows.extend(_error_row(cell, name, f"InfeasibleBudgetError: {exc}") for name in cfg.solvers)
            continue
        for j, name in enumerate(cfg.solvers):
            sa_cfg = None
            if name in SA_RATES:
                sa_cfg = cfg.sa_config(name, derive_seed(cfg.seed, scenario, n_streams, draw, k, j))
            t0 = time.perf_counter()
            try:
                res = _solve(name, space, ctx, sa_cfg)
            except EebaError as exc:
                rows.append(_error_row(cell, name, f"{type(exc).__name__}: {exc}"))
                continue
            elapsed = (time.perf_counter() - t0) * 1e3
            rep = res.report
            row = {**cell, "solver": name, "bits": _bits_str(res.b_star), "rate": rep.rate,
                   "rate_q": rep.rate_q, "power_W": rep.total_power, "ee": rep.rate / rep.total_power,
                   "surrogate": rep.surrogate, "runtime_ms": elapsed if cfg.record_runtime else "",
                   "error": ""}
            row.update(res.counters.as_dict())
            rows.append(row)
    return rows


def _sort_key(row):
    return (row["scenario"], row["N_s"], row["snr_db"], row["draw"], SOLVER_NAMES.index(row["solver"]))


def sweep(cfg, threads=1):
    """Per-draw result rows in canonical order."""
    cells = [(s, n, d) for s in cfg.scenarios for n in cfg.n_streams for d in range(cfg.num_channel_draws)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(run_cell, *zip(*[(cfg, *c) for c in cells])))
    else:
        chunks = [run_cell(cfg, *c) for c in cells]
    rows = [r for chunk in chunks for r in chunk]
    return sorted(rows, key=_sort_key)


def average_rows(rows, value):
    """Means of ``value`` and power over draws per (scenario, N_s, SNR, solver)."""
    groups = {}
    for r in rows:
        key = (r["scenario"], r["N_s"], r["snr_db"], r["solver"])
        groups.setdefault(key, []).append(r)
    out = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2], SOLVER_NAMES.index(k[3]))):
        ok = [r for r in groups[key] if not r["error"]]
        mean = float(np.mean([r[value] for r in ok])) if ok else ""
        power = float(np.mean([r["power_W"] for r in ok])) if ok else ""
        out.append(dict(zip(("scenario", "N_s", "snr_db", "solver"), key),
                        **{f"{value}_mean": mean, "power_W_mean": power, "n_draws": len(ok),
                           "n_errors": len(groups[key]) - len(ok)}))
    return out


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, columns, rows, description):
    with open(path, "w", newline="") as fh:
        fh.write(f"# {description}; columns: {', '.join(columns)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


def read_csv(path):
    """Read a CSV written by :func:`write_csv` (values stay strings)."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def write_gnuplot(out, averaged, value, solvers):
    paths = []
    keys = sorted({(r["scenario"], r["N_s"]) for r in averaged})
    for scen, ns in keys:
        sub = [r for r in averaged if r["scenario"] == scen and r["N_s"] == ns]
        snrs = sorted({r["snr_db"] for r in sub})
        path = out / f"{value}_vs_snr_s{scen}_ns{ns}.dat"
        with open(path, "w") as fh:
            fh.write("# snr_db " + " ".join(solvers) + "\n")
            for s in snrs:
                vals = {r["solver"]: r[f"{value}_mean"] for r in sub if r["snr_db"] == s}
                fh.write(" ".join([_fmt(s)] + [_fmt(vals.get(n, "nan")) or "nan" for n in solvers]) + "\n")
        paths.append(path.name)
    return paths


def complexity_rows(cfg, require=("es", "qsearch")):
    """Operation counts on the first channel draw at the first SNR, per N_s and solver."""
    missing = [s for s in require if s not in cfg.solvers]
    if missing:
        raise ConfigError("solvers", f"complexity report needs {', '.join(missing)}")
    rows = []
    scenario = cfg.scenarios[0]
    for ns in cfg.n_streams:
        chan = generate_channel(cfg.array, cfg.scenario_for(scenario), derive_seed(cfg.seed, scenario, ns, 0),
                                n_streams=ns)
        ctx = AllocationContext(chan, make_combiner(chan, cfg.combiner), cfg.power_for(ns), p=1.0,
                                sigma_n2=sigma_n2_for(cfg.snr_db[0]), max_bits=cfg.max_bits)
        try:
            space = ctx.space()
        except InfeasibleBudgetError:
            continue
        for j, name in enumerate(cfg.solvers):
            if name not in ("es", "qsearch", *SA_RATES):
                continue
            sa_cfg = cfg.sa_config(name, derive_seed(cfg.seed, scenario, ns, 0, 0, j)) if name in SA_RATES else None
            res = _solve(name, space, ctx, sa_cfg)
            row = count_report(res, space, sa_cfg=sa_cfg, label=name)
            bad = [k for k in COMPLEXITY_FIELDS
                   if f"published_{k}" in row and row[f"published_{k}"] != row.get(f"predicted_{k}")]
            row["mismatch"] = " ".join(bad)
            rows.append(row)
    return rows


def validation_rows(cfg):
    """Analytic-vs-empirical MSE, Theorem-1 noise statistics and series-remainder checks."""
    v = cfg.validation
    rows = []
    chan = generate_channel(cfg.array, cfg.scenario_for(cfg.scenarios[0]), derive_seed(cfg.seed, 999, v.n_streams),
                            n_streams=v.n_streams)
    comb = make_combiner(chan, cfg.combiner)
    sn2 = sigma_n2_for(v.snr_db)
    ns = v.n_streams

    def mse_rows(check, b, analytic, empirical, tol):
        for i in range(ns):
            err = abs(empirical[i] - analytic[i])
            rows.append({"check": check, "n_streams": ns, "stream": i, "bits": _bits_str(b),
                         "analytic": analytic[i], "empirical": empirical[i], "abs_error": err,
                         "rel_error": err / analytic[i], "bound": tol, "passed": err / analytic[i] <= tol})

    for k, bits in enumerate(v.aqnm_bits):
        b = np.full(ns, bits)
        emp, _ = monte_carlo_moments(chan, comb, b, 1.0, sn2, cfg.mc_samples, derive_seed(cfg.seed, 1, k))
        mse_rows("mse_aqnm", b, analytic_mse(chan, comb, b, 1.0, sn2), emp, v.mse_tol)
    # the additive model's distortion power assumes unit signal and noise power
    table = uniform_distortion_table()
    for k, bits in enumerate(v.real_bits):
        b = np.full(ns, bits)
        emp, _ = monte_carlo_moments(chan, comb, b, 1.0, 1.0, cfg.mc_samples, derive_seed(cfg.seed, 2, k),
                                     mode="real-quantizer", table=table)
        mse_rows("mse_uniform_quantizer", b, analytic_mse(chan, comb, b, 1.0, 1.0, table), emp, v.real_mse_tol)
    for k, bits in enumerate(v.pseudo_bits):
        b = np.full(ns, bits)
        rep = pseudo_covariance_test(chan, comb, b, sn2, cfg.pseudo_samples, derive_seed(cfg.seed, 3, k))
        common = {"n_streams": ns, "stream": "", "bits": _bits_str(b)}
        rows.append({**common, "check": "pseudo_covariance_max", "analytic": 0.0,
                     "empirical": rep.pseudo_max_normalized, "abs_error": rep.pseudo_max_normalized,
                     "rel_error": "", "bound": rep.clt_bound, "passed": rep.pseudo_ok})
        rows.append({**common, "check": "mean_max", "analytic": 0.0, "empirical": rep.mean_max_normalized,
                     "abs_error": rep.mean_max_normalized, "rel_error": "", "bound": rep.clt_bound,
                     "passed": rep.mean_ok})
        rows.append({**common, "check": "covariance_vs_phi", "analytic": float(np.linalg.norm(rep.Phi)),
                     "empirical": float(np.linalg.norm(rep.Phi_hat)), "abs_error": float(np.linalg.norm(rep.Phi_hat - rep.Phi)),
                     "rel_error": rep.cov_rel_error, "bound": v.cov_tol, "passed": rep.cov_rel_error <= v.cov_tol})
    for q in np.round(np.arange(0.05, 0.5001, 0.05), 10):
        exact = float(np.log2(1 + q))
        approx = float(lemma1_approx(q))
        err = abs(approx - exact)
        rows.append({"check": "lemma1", "n_streams": "", "stream": "", "bits": "", "analytic": approx,
                     "empirical": exact, "abs_error": err, "rel_error": err / exact,
                     "bound": float(lemma1_remainder_bound(q)), "passed": err <= lemma1_remainder_bound(q)})
    h = 0.5
    for q in np.arange(1.0, 20.0, h):
        d_exact = float(np.log2(1 + q + h) - np.log2(1 + q))
        d_approx = float(lemma2_approx(q + h) - lemma2_approx(q))
        err = abs(d_exact - d_approx)
        bound = h * lemma2_slope_bound(q, q + h)
        rows.append({"check": "lemma2_slope", "n_streams": "", "stream": "", "bits": "", "analytic": d_approx / h,
                     "empirical": d_exact / h, "abs_error": err / h, "rel_error": err / abs(d_exact),
                     "bound": bound / h, "passed": err <= bound})
    return rows


def _versions():
    from . import __version__
    return {"eeba": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__, "python": platform.python_version()}


def _override(cfg, seed=None, solvers=None, out=None):
    kw = {}
    if seed is not None:
        kw["seed"] = seed
    if solvers is not None:
        kw["solvers"] = tuple(solvers)
    if out is not None:
        kw["output_dir"] = str(out)
    if kw:
        cfg = dataclasses.replace(cfg, **kw)
        cfg.check()
    return cfg


def run_experiment(cfg, out=None, seed=None, solvers=None, threads=1):
    """Run the full sweep and write every output file; returns the output directory."""
    cfg = _override(cfg, seed, solvers, out)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = sweep(cfg, threads)
    write_csv(outdir / "raw_rows.csv", RAW_COLUMNS, rows, "one row per channel draw, SNR and solver; ee = rate / power_W")
    files = ["raw_rows.csv"]
    for value, name in (("ee", "ee_vs_snr"), ("rate", "rate_vs_snr")):
        averaged = average_rows(rows, value)
        cols = tuple(c.format(value) for c in MEAN_COLUMNS)
        write_csv(outdir / f"{name}.csv", cols, averaged, f"{value} averaged over channel draws")
        files.append(f"{name}.csv")
        files += write_gnuplot(outdir, averaged, value, cfg.solvers)
    if "es" in cfg.solvers and "qsearch" in cfg.solvers:
        write_csv(outdir / "complexity.csv", COMPLEXITY_COLUMNS, complexity_rows(cfg),
                  "operation counts: measured, closed-form and published")
        files.append("complexity.csv")
    if cfg.run_validation:
        write_csv(outdir / "validation.csv", VALIDATION_COLUMNS, validation_rows(cfg),
                  "analytic versus empirical checks")
        files.append("validation.csv")
    manifest = {"config_sha256": cfg.sha256(), "seed": cfg.seed, "solvers": list(cfg.solvers),
                "files": sorted(files), "versions": _versions(), "config": cfg.to_dict()}
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=list) + "\n")
    return outdir


def validate(cfg, out=None):
    cfg = _override(cfg, out=out)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = validation_rows(cfg)
    write_csv(outdir / "validation.csv", VALIDATION_COLUMNS, rows, "analytic versus empirical checks")
    return outdir / "validation.csv", rows


def complexity_report(cfg, out=None):
    cfg = _override(cfg, out=out)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = complexity_rows(cfg)
    write_csv(outdir / "complexity.csv", COMPLEXITY_COLUMNS, rows, "operation counts: measured, closed-form and published")
    return outdir / "complexity.csv", rows
