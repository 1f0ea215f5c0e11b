"""Experiment protocols: cross-validation, runners and summaries."""

from __future__ import annotations

import json
import math
import time
from pathlib import Path

import numpy as np
from scipy import integrate

from ..errors import DegenerateWeightsError
from ..estimator import BoundInputs, generalization_bound
from ..kernel import KernelSpec, kernel_l2_integral, nw_weights, uniform_weights
from ..solvers import (
    newsvendor_loss,
    solve_ldr_portfolio,
    solve_newsvendor_dro,
    solve_rnw_linear,
    solve_wind_dro,
    wind_loss,
)
from ..subspace import fit_subspace, project
from .config import ExperimentConfig
from .data import (
    NEWSVENDOR_PROBES,
    DEMAND_HALF_WIDTH,
    Dataset,
    WindParams,
    gen_newsvendor,
    gen_portfolio,
    gen_wind_synthetic,
    newsvendor_center,
    newsvendor_demand,
    newsvendor_density,
    portfolio_mean,
    trial_streams,
    wind_dataset,
)
from .io import RESULT_COLUMNS, TIMING_COLUMNS, save_csv

__all__ = [
    "bandwidth",
    "kernel_weights",
    "NewsvendorProblem",
    "WindProblem",
    "PortfolioProblem",
    "cross_validate",
    "improvement",
    "summarize_improvements",
    "run_portfolio",
    "run_newsvendor",
    "run_wind",
    "run_bounds",
    "run_experiment",
    "newsvendor_loss_moments",
]


def bandwidth(c_h: float, n: int, p: int) -> float:
    return float(c_h) * n ** (-1.0 / (p + 4))


def kernel_weights(config: ExperimentConfig, covariates, query, c_h: float):
    """NW weights, optionally on PCA-projected covariates; uniform if every kernel value vanishes."""
    G = np.atleast_2d(np.asarray(covariates, dtype=float))
    q = np.asarray(query, dtype=float).reshape(-1)
    if config.pca:
        model = fit_subspace(G, config.intrinsic_dim)
        G, q = project(model, G), project(model, q)
    p = G.shape[1]
    spec = KernelSpec(config.kernel, bandwidth(c_h, G.shape[0], p), p)
    try:
        return nw_weights(spec, G, q)
    except DegenerateWeightsError:
        return uniform_weights(G.shape[0])


# ---------------------------------------------------------------- problems


class NewsvendorProblem:
    higher_is_better = False

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.loss = newsvendor_loss(config.backorder, config.holding)

    def decide(self, train: Dataset, w, lam):
        c = self.config
        return solve_newsvendor_dro(train.outcomes[:, 0], w, c.backorder, c.holding, lam).x

    def realized(self, decision, outcome_rows):
        return float(np.sum(self.loss.losses(decision, np.asarray(outcome_rows)[:, 0])))


class WindProblem:
    higher_is_better = False

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.loss = wind_loss()
        self.iterations = config.solver_iterations

    def decide(self, train: Dataset, w, lam):
        return solve_wind_dro(train.outcomes, w, lam, max_iter=self.iterations).x

    def realized(self, decision, outcome_rows):
        return float(np.sum(self.loss.losses(decision, outcome_rows)))


class PortfolioProblem:
    higher_is_better = False

    def __init__(self, config: ExperimentConfig):
        self.config = config

    def decide(self, train: Dataset, w, lam):
        return solve_rnw_linear(train.outcomes, w, lam).x

    def realized(self, decision, outcome_rows):
        return float(-np.sum(np.atleast_2d(outcome_rows) @ decision))


def _cv_score(problem, cfg, sub, val, c_h, lam):
    total = 0.0
    for i in range(val.n):
        w = kernel_weights(cfg, sub.covariates, val.covariates[i], c_h)
        x = problem.decide(sub, w, lam)
        total += problem.realized(x, val.outcomes[i : i + 1])
    return total


def cross_validate(config: ExperimentConfig, dataset: Dataset, problem=None):
    """Two-stage grid search: bandwidth constant at lambda 0, then lambda at that constant.

    The first ``cv_fraction`` of the rows (in order) is the sub-training set
    and the rest is validation.  Total realized validation loss is minimized;
    ties go to the smaller parameter.
    """
    problem = problem if problem is not None else _problem_for(config)
    ch_grid = sorted(float(v) for v in config.bandwidth_grid)
    lam_grid = sorted(float(v) for v in config.lambda_grid)
    if len(ch_grid) == 1 and len(lam_grid) == 1:
        return ch_grid[0], lam_grid[0]
    n_sub = int(round(config.cv_fraction * dataset.n))
    n_sub = min(max(n_sub, 1), dataset.n - 1)
    sub = dataset.subset(slice(0, n_sub))
    val = dataset.subset(slice(n_sub, dataset.n))
    best_ch = ch_grid[0]
    if len(ch_grid) > 1:
        scores = [_cv_score(problem, config, sub, val, c, 0.0) for c in ch_grid]
        best_ch = ch_grid[int(np.argmin(scores))]  # argmin keeps the first (smallest) on ties
    best_lam = lam_grid[0]
    if len(lam_grid) > 1:
        scores = [_cv_score(problem, config, sub, val, best_ch, lam) for lam in lam_grid]
        best_lam = lam_grid[int(np.argmin(scores))]
    return best_ch, best_lam


def _problem_for(config):
    return {"newsvendor": NewsvendorProblem, "wind": WindProblem, "portfolio": PortfolioProblem}[config.experiment](
        config
    )


# ---------------------------------------------------------------- summaries


def improvement(x, y) -> float:
    """Symmetric relative difference ``2 (x - y) / (|x| + |y|)``; zero when both vanish."""
    den = abs(x) + abs(y)
    return 0.0 if den == 0 else 2.0 * (x - y) / den


def summarize_improvements(values) -> dict:
    v = np.asarray(values, dtype=float)
    return {
        "mean": float(v.mean()),
        "p20": float(np.percentile(v, 20)),
        "p80": float(np.percentile(v, 80)),
    }


class _Recorder:
    def __init__(self, experiment):
        self.experiment = experiment
        self.rows, self.timings = [], []

    def add(self, method, trial, index, ch, lam, value, seconds):
        base = {"experiment": self.experiment, "method": method, "trial": trial, "index": index}
        self.rows.append({**base, "param_bandwidth": ch, "param_lambda": lam, "value": float(value)})
        self.timings.append({**base, "seconds": seconds})


# ---------------------------------------------------------------- portfolio


def _ldr_cv(gam, R, grid, fraction):
    n_sub = min(max(int(round(fraction * gam.size)), 1), gam.size - 1)
    best, best_score = None, None
    for lam in sorted(grid):
        x1, x2, y, _ = solve_ldr_portfolio(gam[:n_sub], R[:n_sub], lam)
        gv = gam[n_sub:]
        alloc = np.column_stack([x1 + gv * y, x2 + gv * y])
        score = float(np.sum(R[n_sub:, :2] * alloc))
        if best_score is None or score > best_score:
            best, best_score = lam, score
    return best


def run_portfolio(config: ExperimentConfig) -> dict:
    rec = _Recorder("portfolio")
    probes = np.linspace(-1.0, 1.0, config.eval_points)
    per_trial = {m: [] for m in ("SAA", "NW", "RNW", "LDR")}
    alloc_zero = []
    for trial, rng in enumerate(trial_streams(config.seed, config.trials)):
        D = gen_portfolio(config.n, rng)
        c_h, lam = cross_validate(config, D, PortfolioProblem(config))
        t0 = time.perf_counter()
        saa = solve_rnw_linear(D.outcomes, uniform_weights(D.n), 0.0).x
        t_saa = time.perf_counter() - t0
        gam = D.covariates[:, 0]
        lam_ldr = _ldr_cv(gam, D.outcomes, config.ldr_lambda_grid, config.cv_fraction)
        t0 = time.perf_counter()
        x1, x2, y, _ = solve_ldr_portfolio(gam, D.outcomes, lam_ldr)
        t_ldr = time.perf_counter() - t0
        sums = {m: 0.0 for m in per_trial}
        for j, g in enumerate(probes):
            m = float(portfolio_mean(g))
            w = kernel_weights(config, D.covariates, [g], c_h)
            vals = {}
            t0 = time.perf_counter()
            x_nw = solve_rnw_linear(D.outcomes, w, 0.0).x
            t_nw = time.perf_counter() - t0
            t0 = time.perf_counter()
            x_rnw = solve_rnw_linear(D.outcomes, w, lam).x
            t_rnw = time.perf_counter() - t0
            vals["SAA"] = (m * (saa[0] + saa[1]), t_saa, 0.0, 0.0)
            vals["NW"] = (m * (x_nw[0] + x_nw[1]), t_nw, c_h, 0.0)
            vals["RNW"] = (m * (x_rnw[0] + x_rnw[1]), t_rnw, c_h, lam)
            vals["LDR"] = (m * (x1 + x2 + 2 * g * y), t_ldr, 0.0, lam_ldr)
            for meth, (v, sec, chv, lv) in vals.items():
                rec.add(meth, trial, j, chv, lv, v, sec)
                sums[meth] += v
        for meth in per_trial:
            per_trial[meth].append(sums[meth] / probes.size)
        w0 = kernel_weights(config, D.covariates, [0.0], c_h)
        alloc_zero.append(solve_rnw_linear(D.outcomes, w0, lam).x.tolist())
    summary = {
        "experiment": "portfolio",
        "mean_return": {m: float(np.mean(v)) for m, v in per_trial.items()},
        "per_trial_return": per_trial,
        "rnw_allocation_at_zero": alloc_zero,
        "ldr_return_standard_error": float(np.std(per_trial["LDR"], ddof=1) / math.sqrt(len(per_trial["LDR"])))
        if config.trials > 1
        else float("nan"),
        "ldr_probe_standard_error": _probe_se(rec.rows, "LDR"),
        "improvement_over_saa": {
            m: summarize_improvements([improvement(a, b) for a, b in zip(per_trial[m], per_trial["SAA"])])
            for m in per_trial
        },
    }
    return {"rows": rec.rows, "timings": rec.timings, "summary": summary}


def _probe_se(rows, method):
    v = np.array([r["value"] for r in rows if r["method"] == method])
    return float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")


# ---------------------------------------------------------------- newsvendor


def newsvendor_loss_moments(q, center, backorder, holding, half_width=DEMAND_HALF_WIDTH):
    """Mean and variance of the cost at order ``q`` when demand is uniform on ``center +- half_width``."""
    lo, hi = center - half_width, center + half_width

    def cost(d):
        return holding * max(q - d, 0.0) + backorder * max(d - q, 0.0)

    dens = 1.0 / (hi - lo)
    pts = [q] if lo < q < hi else None
    m1 = integrate.quad(lambda d: cost(d) * dens, lo, hi, points=pts, epsabs=1e-13)[0]
    m2 = integrate.quad(lambda d: cost(d) ** 2 * dens, lo, hi, points=pts, epsabs=1e-13)[0]
    return m1, max(m2 - m1 * m1, 0.0)


def run_newsvendor(config: ExperimentConfig) -> dict:
    rec = _Recorder("newsvendor")
    probes = np.asarray(config.probes if config.probes is not None else NEWSVENDOR_PROBES, dtype=float)
    lam_grid = sorted(float(v) for v in config.lambda_grid)
    c_h = float(sorted(config.bandwidth_grid)[0]) if len(config.bandwidth_grid) == 1 else None
    loss = newsvendor_loss(config.backorder, config.holding)
    table = {}
    for trial, rng in enumerate(trial_streams(config.seed, config.trials)):
        D = gen_newsvendor(config.n, rng)
        # evaluation demand gets its own streams so it does not depend on the training draw count
        eval_seeds = np.random.SeedSequence([config.seed, trial, 1]).spawn(len(probes))
        eval_rngs = [np.random.Generator(np.random.PCG64(s)) for s in eval_seeds]
        ch = c_h if c_h is not None else cross_validate(config, D, NewsvendorProblem(config))[0]
        for j, g in enumerate(probes):
            demand = newsvendor_demand(g, config.eval_samples, eval_rngs[j])
            t0 = time.perf_counter()
            q = solve_newsvendor_dro(D.outcomes[:, 0], uniform_weights(D.n), config.backorder, config.holding, 0.0).x
            sec = time.perf_counter() - t0
            v = float(loss.losses(q, demand).mean())
            rec.add("SAA", trial, j, 0.0, 0.0, v, sec)
            w = kernel_weights(config, D.covariates, g, ch)
            for lam in lam_grid:
                t0 = time.perf_counter()
                q = solve_newsvendor_dro(D.outcomes[:, 0], w, config.backorder, config.holding, lam).x
                sec = time.perf_counter() - t0
                v = float(loss.losses(q, demand).mean())
                rec.add("NW" if lam == 0 else "RNW", trial, j, ch, lam, v, sec)
                table.setdefault((j, lam), []).append(v)
    per_probe = []
    for j in range(len(probes)):
        means = {lam: float(np.mean(table[(j, lam)])) for lam in lam_grid}
        best_lam = min(lam_grid, key=lambda lam: (means[lam], lam))
        saa = [r["value"] for r in rec.rows if r["method"] == "SAA" and r["index"] == j]
        per_probe.append(
            {
                "probe": probes[j].tolist(),
                "mean_loss_by_lambda": {format(k, ".6g"): v for k, v in means.items()},
                "best_lambda": best_lam,
                "best_mean_loss": means[best_lam],
                "lambda0_mean_loss": means.get(0.0, float("nan")),
                "saa_mean_loss": float(np.mean(saa)),
            }
        )
    return {"rows": rec.rows, "timings": rec.timings, "summary": {"experiment": "newsvendor", "probes": per_probe}}


# ---------------------------------------------------------------- wind


def run_wind(config: ExperimentConfig) -> dict:
    rec = _Recorder("wind")
    params = WindParams(**config.wind_params)
    problem = WindProblem(config)
    totals = {m: [] for m in ("SAA", "NW", "RNW")}
    chosen = []
    n, N = config.n, config.horizon
    for trial, rng in enumerate(trial_streams(config.seed, config.trials)):
        prices, prod = gen_wind_synthetic(config.burn_in + 1 + n + N, rng, params)
        D = wind_dataset(prices[config.burn_in :], prod[config.burn_in :])
        c_h, lam = cross_validate(config, D.subset(slice(0, n)), problem)
        chosen.append([c_h, lam])
        profit = {m: 0.0 for m in totals}
        for k in range(N):
            train = D.subset(slice(k, k + n))
            day = D.outcomes[k + n : k + n + 1]
            w = kernel_weights(config, train.covariates, D.covariates[k + n], c_h)
            for meth, weights, lv, chv in (
                ("SAA", uniform_weights(n), 0.0, 0.0),
                ("NW", w, 0.0, c_h),
                ("RNW", w, lam, c_h),
            ):
                t0 = time.perf_counter()
                x = problem.decide(train, weights, lv)
                sec = time.perf_counter() - t0
                v = -problem.realized(x, day)
                rec.add(meth, trial, k, chv, lv, v, sec)
                profit[meth] += v
        for m in totals:
            totals[m].append(profit[m])
    summary = {
        "experiment": "wind",
        "season_profit": totals,
        "cv_choice": chosen,
        "improvement_over_saa": {
            m: summarize_improvements([improvement(a, b) for a, b in zip(totals[m], totals["SAA"])]) for m in totals
        },
    }
    return {"rows": rec.rows, "timings": rec.timings, "summary": summary}


# ---------------------------------------------------------------- bounds


def run_bounds(config: ExperimentConfig) -> dict:
    """Monte-Carlo coverage of the generalization bound on newsvendor data.

    The decision is fixed at the true optimal order for the probe, and losses
    are divided by the largest attainable cost at that probe so they lie in
    [0, 1] there.
    """
    rec = _Recorder("bounds")
    probe = np.asarray(config.probes[0] if config.probes else [8.2247, 5.0], dtype=float)
    b, hc = config.backorder, config.holding
    center = newsvendor_center(probe.reshape(1, -1))[0]
    fr = b / (b + hc)
    q = center - DEMAND_HALF_WIDTH + 2 * DEMAND_HALF_WIDTH * fr
    scale = max(hc * (q - center + DEMAND_HALF_WIDTH), b * (center + DEMAND_HALF_WIDTH - q))
    mean_raw, var_raw = newsvendor_loss_moments(q, center, b, hc)
    truth, var = mean_raw / scale, var_raw / scale ** 2
    loss = newsvendor_loss(b, hc)
    p = 2
    c_h = float(config.bandwidth_grid[0])
    h = bandwidth(c_h, config.n, p)
    l2 = kernel_l2_integral(KernelSpec(config.kernel, h, p))
    g = newsvendor_density(probe) / (2.0 * l2)
    bound = generalization_bound(BoundInputs(n=config.n, h=h, p=p, delta=config.delta, g_gamma=g, variance=var))
    covered = []
    for trial, rng in enumerate(trial_streams(config.seed, config.trials)):
        D = gen_newsvendor(config.n, rng)
        t0 = time.perf_counter()
        w = nw_weights(KernelSpec(config.kernel, h, p), D.covariates, probe)
        est = float(w @ loss.losses(q, D.outcomes[:, 0])) / scale
        sec = time.perf_counter() - t0
        err = abs(est - truth)
        covered.append(err <= bound)
        rec.add("NW", trial, 0, c_h, 0.0, err, sec)
    summary = {
        "experiment": "bounds",
        "probe": probe.tolist(),
        "decision": q,
        "bandwidth": h,
        "g_gamma": g,
        "true_mean": truth,
        "true_variance": var,
        "bound": bound,
        "coverage": float(np.mean(covered)),
        "target": 1.0 - config.delta,
    }
    return {"rows": rec.rows, "timings": rec.timings, "summary": summary}


_RUNNERS = {"portfolio": run_portfolio, "newsvendor": run_newsvendor, "wind": run_wind, "bounds": run_bounds}


def run_experiment(config: ExperimentConfig, output=None) -> dict:
    """Run the configured protocol; writes results, timings and summary when an output path is set.

    ``output`` (or ``config.output``) names the results CSV.  Timings go to
    ``<stem>.timing.csv`` and the summary to ``<stem>.summary.json`` so the
    results file stays byte-identical across runs with the same seed.
    """
    config.validate()
    out = _RUNNERS[config.experiment](config)
    path = output if output is not None else config.output
    if path is not None:
        path = Path(path)
        save_csv(out["rows"], path, RESULT_COLUMNS)
        save_csv(out["timings"], path.with_suffix(".timing.csv"), TIMING_COLUMNS)
        with open(path.with_suffix(".summary.json"), "w", encoding="utf-8") as fh:
            json.dump(out["summary"], fh, indent=2, sort_keys=True)
            fh.write("\n")
    return out
