"""Replicated simulation comparisons: generate preferentially sampled data,
fit each configured method, krige onto the grid, and score prediction error
against the simulated truth.

Configuration is a flat key=value text file (arrays comma-separated,
``#`` starts a comment). Recognized keys and defaults mirror
:class:`ExperimentConfig`: replicates, grid_nx, grid_ny, domain (x0,x1,y0,y1),
mu, sigma2, nu, tau2, phi (list), samplers (lgcp|scp|thomas list), beta,
alpha, n (list), methods (list, see below), threshold, m, pm_cutoff, seed,
threads, exact_mle_max_n, thomas_parent_rate, thomas_offspring_scale,
timing (on|off).

Method entries are ``mle``, ``vecchia``, or ``isiw-v:SOURCE`` /
``isiw-pm:SOURCE`` with SOURCE one of known, scott, diggle, ppl, CvL,
CvL.adaptive. ``known`` reads the true sampling intensity off the
simulated surface; the others estimate it from the point pattern.

Every row is reproducible from (seed, scenario, replicate): streams are
keyed by a hash of the scenario label plus the replicate id, fits are
deterministic, and rows are sorted before writing. Wall-clock timing is the
one nondeterministic field; set ``timing=off`` to zero it for byte-level
reproducibility audits.
"""

from __future__ import annotations

import hashlib
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields as dataclass_fields
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .fields import GridSpec, SeedStream, observe, simulate_field
from .inference import FitConfig, default_init, fit
from .intensity import estimate_intensity, select_bandwidth, weights_from_intensity
from .io import write_rows
from .kriging import krige
from .likelihood import EXACT, PAIRWISE_MARGINAL, VECCHIA, Objective, maxmin_order, nn_conditioning_sets
from .model import CovParams, Domain, ModelParams, microergodic
from .pointprocess import THOMAS, SamplerSpec, compute_intensity, sample_conditioned, sample_thomas

RESULTS_HEADER = [
    "replicate", "scenario", "method", "variant", "rmspe",
    "mu", "sigma2", "phi", "tau2", "kappa", "seconds", "converged",
]
KNOWN = "known"
WEIGHT_SOURCES = (KNOWN, "scott", "diggle", "ppl", "CvL", "CvL.adaptive")
METHOD_MLE = "mle"
METHOD_VECCHIA = "vecchia"
METHOD_ISIW_V = "isiw-v"
METHOD_ISIW_PM = "isiw-pm"


@dataclass
class ExperimentConfig:
    replicates: int = 50
    grid_nx: int = 48
    grid_ny: int = 48
    domain: Domain = field(default_factory=lambda: Domain(0.0, 1.0, 0.0, 1.0))
    mu: float = 4.0
    sigma2: float = 1.5
    nu: float = 1.0
    tau2: float = 0.1
    phi: tuple = (0.02, 0.15)
    samplers: tuple = ("lgcp",)
    beta: float = 1.0
    alpha: float = 0.0
    n: tuple = (100, 800)
    methods: tuple = ("mle", "isiw-v:known", "isiw-v:diggle", "isiw-v:CvL.adaptive")
    threshold: float = 0.01
    m: int = 20
    pm_cutoff: float | None = None
    seed: int = 1
    threads: int = 1
    exact_mle_max_n: int = 200
    thomas_parent_rate: float = 25.0
    thomas_offspring_scale: float = 0.1
    timing: bool = True

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        self.method_specs()  # validate early

    def grid(self) -> GridSpec:
        return GridSpec(self.domain, self.grid_nx, self.grid_ny)

    def method_specs(self) -> list:
        specs = []
        for entry in self.methods:
            name, _, variant = entry.partition(":")
            if name in (METHOD_MLE, METHOD_VECCHIA):
                if variant:
                    raise ValueError(f"{name} takes no weight source: {entry!r}")
                specs.append((name, ""))
            elif name in (METHOD_ISIW_V, METHOD_ISIW_PM):
                if variant not in WEIGHT_SOURCES:
                    raise ValueError(f"unknown weight source in {entry!r}")
                specs.append((name, variant))
            else:
                raise ValueError(f"unknown method {entry!r}")
        return specs

    def scenarios(self) -> list:
        out = []
        for kind in self.samplers:
            for n in self.n:
                for phi in self.phi:
                    out.append(Scenario(kind=kind, n=int(n), phi=float(phi)))
        return out

    def truth(self, phi: float) -> ModelParams:
        return ModelParams.from_values(self.mu, self.sigma2, phi, self.tau2, nu=self.nu)


@dataclass(frozen=True)
class Scenario:
    kind: str
    n: int
    phi: float

    @property
    def label(self) -> str:
        return f"{self.kind}-n{self.n}-phi{self.phi:g}"

    @property
    def sid(self) -> int:
        return int.from_bytes(hashlib.sha256(self.label.encode()).digest()[:4], "big")


@dataclass
class MetricsRow:
    replicate: int
    scenario: str
    method: str
    variant: str
    rmspe: float
    psi_hat: ModelParams | None
    seconds: float
    converged: bool
    rel_err: dict | None = None
    error: str | None = None

    def csv_row(self) -> tuple:
        if self.psi_hat is None:
            vals = (math.nan,) * 5
        else:
            t = self.psi_hat.theta
            vals = (self.psi_hat.mu, t.sigma2, t.phi, self.psi_hat.tau2, microergodic(t))
        return (
            self.replicate, self.scenario, self.method, self.variant, self.rmspe,
            *vals, self.seconds, self.converged,
        )


def rmspe(predictions, truth) -> float:
    """Root mean squared difference between matched vectors."""
    predictions = np.asarray(predictions, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if predictions.size != truth.size or predictions.size == 0:
        raise ValueError("predictions and truth must be equal nonzero length")
    return float(np.sqrt(np.mean((predictions - truth) ** 2)))


def param_metrics(fits, truth: ModelParams) -> dict:
    """Relative bias and relative RMSE per parameter, including the
    microergodic ratio. Parameters whose true value is zero come back as
    (nan, nan)."""
    if not fits:
        raise ValueError("no fits to summarize")
    true_vals = {**truth.as_dict(), "kappa": microergodic(truth.theta)}
    del true_vals["nu"]
    out = {}
    for name, true in true_vals.items():
        if true == 0:
            out[name] = (math.nan, math.nan)
            continue
        ests = np.array(
            [{**f.as_dict(), "kappa": microergodic(f.theta)}[name] for f in fits]
        )
        rel = (ests - true) / true
        out[name] = (float(np.mean(rel)), float(np.sqrt(np.mean(rel * rel))))
    return out


def _true_point_intensity(scenario, field, spec, locs):
    if scenario.kind == THOMAS:
        raise ValueError("known weights are unavailable for the Thomas process")
    cell_intensity = compute_intensity(scenario.kind, field, spec)
    return cell_intensity[field.grid.locate(locs)]


def run_replicate(config: ExperimentConfig, scenario: Scenario, replicate: int) -> list:
    """Simulate one dataset and produce one MetricsRow per configured method."""
    root = SeedStream(config.seed)
    grid = config.grid()
    theta = CovParams(config.sigma2, scenario.phi, config.nu)
    fld = simulate_field(grid, theta, root.child(scenario.sid, replicate, 0))
    spec = SamplerSpec(
        kind=scenario.kind,
        n=scenario.n,
        beta=config.beta,
        alpha=config.alpha,
        parent_rate=config.thomas_parent_rate,
        offspring_scale=config.thomas_offspring_scale,
    )
    if scenario.kind == THOMAS:
        locs = sample_thomas(fld, spec, root.child(scenario.sid, replicate, 1))
    else:
        cell_intensity = compute_intensity(scenario.kind, fld, spec)
        locs = sample_conditioned(fld, cell_intensity, scenario.n, root.child(scenario.sid, replicate, 1))
    data = observe(fld, locs, config.mu, config.tau2, root.child(scenario.sid, replicate, 2))

    truth_surface = config.mu + fld.values
    centers = grid.cell_centers()
    init = default_init(data, config.domain)
    plan = None
    weight_cache: dict = {}

    def get_plan():
        nonlocal plan
        if plan is None:
            plan = nn_conditioning_sets(data.locations, maxmin_order(data.locations), config.m)
        return plan

    def get_weights(source):
        if source not in weight_cache:
            if source == KNOWN:
                lam = _true_point_intensity(scenario, fld, spec, locs)
                weight_cache[source] = weights_from_intensity(lam, config.threshold)
            else:
                bw = select_bandwidth(source, locs, config.domain)
                est = estimate_intensity(locs, config.domain, bw)
                weight_cache[source] = weights_from_intensity(est, config.threshold)
        return weight_cache[source]

    rows = []
    for mi, (method, variant) in enumerate(config.method_specs()):
        start = time.perf_counter()
        try:
            if method == METHOD_MLE:
                if scenario.n <= config.exact_mle_max_n:
                    objective = Objective(kind=EXACT)
                else:
                    objective = Objective(kind=VECCHIA, plan=get_plan())
            elif method == METHOD_VECCHIA:
                objective = Objective(kind=VECCHIA, plan=get_plan())
            elif method == METHOD_ISIW_V:
                objective = Objective(kind=VECCHIA, plan=get_plan(), weights=get_weights(variant))
            else:
                objective = Objective(
                    kind=PAIRWISE_MARGINAL,
                    weights=get_weights(variant),
                    pair_cutoff=config.pm_cutoff,
                )
            fit_cfg = FitConfig(
                domain=config.domain,
                restart_seed=(config.seed * 2654435761 + scenario.sid * 7919 + replicate * 104729 + mi)
                % (2**63),
            )
            res = fit(objective, data, init, fit_cfg)
            surface = krige(res.psi_hat, data, centers)
            score = rmspe(surface.predictions, truth_surface)
            truth_psi = config.truth(scenario.phi)
            rel = param_metrics([res.psi_hat], truth_psi)
            row = MetricsRow(
                replicate=replicate,
                scenario=scenario.label,
                method=method,
                variant=variant,
                rmspe=score,
                psi_hat=res.psi_hat,
                seconds=0.0,
                converged=res.converged,
                rel_err={k: v[0] for k, v in rel.items()},
            )
        except Exception as exc:  # a failed method must not sink the replicate
            row = MetricsRow(
                replicate=replicate,
                scenario=scenario.label,
                method=method,
                variant=variant,
                rmspe=math.nan,
                psi_hat=None,
                seconds=0.0,
                converged=False,
                error=f"{type(exc).__name__}: {exc}",
            )
        if config.timing:
            row.seconds = time.perf_counter() - start
        rows.append(row)
    return rows


def _replicate_task(args):
    config, scenario, replicate = args
    return run_replicate(config, scenario, replicate)


def run_experiment(config: ExperimentConfig, out_dir) -> tuple:
    """Run every scenario x replicate cell, write the per-replicate results
    CSV plus summary, rank, and parameter-error tables, and return
    (rows, summary_rows)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(config, sc, rep) for sc in config.scenarios() for rep in range(config.replicates)]

    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            chunks = list(pool.map(_replicate_task, tasks, chunksize=1))
    else:
        chunks = [_replicate_task(t) for t in tasks]

    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (r.scenario, r.replicate, r.method, r.variant))
    write_rows(out_dir / "results.csv", RESULTS_HEADER, (r.csv_row() for r in rows))

    summary = summarize(rows)
    write_rows(
        out_dir / "summary.csv",
        ["scenario", "method", "variant", "mean_rmspe", "sd_rmspe", "n", "failures"],
        summary,
    )
    write_rows(
        out_dir / "ranks.csv",
        ["scenario", "method", "variant", "median_rank", "mean_rank", "pct_lower_rmspe_than_mle"],
        rank_table(rows),
    )
    write_rows(
        out_dir / "params_summary.csv",
        ["scenario", "method", "variant", "param", "rel_bias", "rel_rmse"],
        _param_table(config, rows),
    )
    _write_metadata(config, out_dir / "run_metadata.txt", len(rows))
    return rows, summary


def summarize(rows) -> list:
    """Mean and sd of RMSPE per (scenario, method, variant)."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.scenario, r.method, r.variant), []).append(r.rmspe)
    out = []
    for (scenario, method, variant), vals in sorted(groups.items()):
        ok = np.array([v for v in vals if math.isfinite(v)])
        mean = float(np.mean(ok)) if ok.size else math.nan
        sd = float(np.std(ok, ddof=1)) if ok.size > 1 else 0.0
        out.append((scenario, method, variant, mean, sd, len(vals), len(vals) - ok.size))
    return out


def rank_table(rows) -> list:
    """Per-scenario (plus pooled "all") rank statistics and the share of
    replicates beating the unweighted exact fit."""
    by_cell: dict = {}
    for r in rows:
        if math.isfinite(r.rmspe):
            by_cell.setdefault((r.scenario, r.replicate), []).append(r)

    def stats(scenario_filter):
        ranks: dict = {}
        beats: dict = {}
        for (scenario, _rep), cell in by_cell.items():
            if scenario_filter is not None and scenario != scenario_filter:
                continue
            vals = rankdata([r.rmspe for r in cell])
            mle = next((r.rmspe for r in cell if r.method == METHOD_MLE), None)
            for r, rank in zip(cell, vals):
                key = (r.method, r.variant)
                ranks.setdefault(key, []).append(rank)
                if mle is not None and r.method != METHOD_MLE:
                    beats.setdefault(key, []).append(r.rmspe < mle)
        label = scenario_filter if scenario_filter is not None else "all"
        out = []
        for key in sorted(ranks):
            rk = np.array(ranks[key])
            pct = 100.0 * np.mean(beats[key]) if key in beats else math.nan
            out.append((label, key[0], key[1], float(np.median(rk)), float(np.mean(rk)), float(pct)))
        return out

    scenarios = sorted({s for s, _ in by_cell})
    table = []
    for scenario in scenarios:
        table.extend(stats(scenario))
    if len(scenarios) > 1:
        table.extend(stats(None))
    return table


def _param_table(config, rows) -> list:
    phi_by_label = {sc.label: sc.phi for sc in config.scenarios()}
    groups: dict = {}
    for r in rows:
        if r.psi_hat is not None:
            groups.setdefault((r.scenario, r.method, r.variant), []).append(r.psi_hat)
    out = []
    for (scenario, method, variant), fits in sorted(groups.items()):
        metrics = param_metrics(fits, config.truth(phi_by_label[scenario]))
        for name, (bias, rms) in metrics.items():
            out.append((scenario, method, variant, name, bias, rms))
    return out


def _write_metadata(config: ExperimentConfig, path: Path, n_rows: int) -> None:
    lines = [f"{line}\n" for line in format_config(config).splitlines()]
    lines.append(f"rows_written={n_rows}\n")
    lines.append("rmspe_convention=predictions scored against mu + S at grid cell centers\n")
    path.write_text("".join(lines))


def format_config(config: ExperimentConfig) -> str:
    """Serialize a config to the flat key=value format parse_config reads."""
    parts = []
    for f in dataclass_fields(ExperimentConfig):
        value = getattr(config, f.name)
        if isinstance(value, Domain):
            value = f"{value.x0},{value.x1},{value.y0},{value.y1}"
        elif isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = "on" if value else "off"
        elif value is None:
            value = ""
        parts.append(f"{f.name}={value}")
    return "\n".join(parts)


_FLOAT_KEYS = {
    "mu", "sigma2", "nu", "tau2", "beta", "alpha", "threshold",
    "thomas_parent_rate", "thomas_offspring_scale",
}
_INT_KEYS = {"replicates", "grid_nx", "grid_ny", "m", "seed", "threads", "exact_mle_max_n"}


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat key=value config format (see module docstring)."""
    kwargs: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _FLOAT_KEYS:
            kwargs[key] = float(value)
        elif key in _INT_KEYS:
            kwargs[key] = int(value)
        elif key == "domain":
            x0, x1, y0, y1 = (float(v) for v in value.split(","))
            kwargs[key] = Domain(x0, x1, y0, y1)
        elif key == "phi":
            kwargs[key] = tuple(float(v) for v in value.split(","))
        elif key == "n":
            kwargs[key] = tuple(int(v) for v in value.split(","))
        elif key in ("samplers", "methods"):
            kwargs[key] = tuple(v.strip() for v in value.split(",") if v.strip())
        elif key == "pm_cutoff":
            kwargs[key] = float(value) if value else None
        elif key == "timing":
            kwargs[key] = value.lower() in ("on", "true", "1", "yes")
        else:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())
