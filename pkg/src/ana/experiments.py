"""Runners behind the CLI subcommands; each writes CSV artifacts to a directory."""

from __future__ import annotations

import csv
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import convergence
from .config import ExperimentConfig
from .datasets import generate_dataset
from .network import Dense, Network, save_params
from .noise import NoiseFamily, NoiseParams, equivalent_params
from .quantiser import Quantiser, heaviside_quantiser
from .regulariser import RegularisedActivation, Strategy
from .schedule import (
    LayerScheduleSpec,
    ScheduleStrategy,
    build_schedule,
)
from .trainer import TrainConfig, iterations_per_epoch, seed_streams, train

log = logging.getLogger(__name__)

TRAIN_LOG = "train_log.csv"
PARAMS = "params.bin"
REGCURVE = "regcurve.csv"
CHECK = "check.csv"
RATIO = "ratio.csv"
VERDICTS = "verdicts.txt"
SUMMARY = "summary.csv"
RUNS = "runs.csv"


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


# ----------------------------------------------------------------------------
# train


def layer_families(cfg: ExperimentConfig) -> list[NoiseFamily]:
    fams = [NoiseFamily(f) for f in cfg.noise.family]
    if len(fams) == 1:
        fams = fams * len(cfg.network.hidden)
    return fams


def build_network(cfg: ExperimentConfig, n_in: int, n_classes: int, rng: np.random.Generator) -> Network:
    net_cfg = cfg.network
    feat_q = Quantiser(net_cfg.levels, net_cfg.thresholds)
    w_q = Quantiser(net_cfg.weight_levels or net_cfg.levels, net_cfg.weight_thresholds or net_cfg.thresholds)
    fams = layer_families(cfg)
    strategy = cfg.train.strategy
    acts = [RegularisedActivation(feat_q, f, strategy=strategy) for f in fams]
    wacts = [RegularisedActivation(w_q, f, strategy=strategy) for f in fams] if net_cfg.quantise_weights else None
    sizes = [n_in, *net_cfg.hidden, n_classes]
    return Network.dense(sizes, acts, rng, wacts)


def build_layer_schedule(cfg: ExperimentConfig, total_iterations: int) -> list[LayerScheduleSpec]:
    nz = cfg.noise
    fams = layer_families(cfg)
    n = len(fams)
    base = LayerScheduleSpec(
        c_alpha=nz.c_alpha,
        c_beta=nz.c_beta,
        static_mean=nz.static_mean,
        static_variance=nz.static_variance,
    )
    if nz.static_mean and nz.static_variance:
        specs = [base] * n
    else:
        t_anneal = nz.anneal_fraction * total_iterations
        specs = build_schedule(ScheduleStrategy(nz.decay_interval, nz.decay_power_law), n, t_anneal, base)
    if nz.match_compact is not None:
        out = []
        for spec, fam in zip(specs, fams):
            eq = equivalent_params(fam, nz.match_compact, NoiseParams(0.0, spec.c_beta))
            out.append(replace(spec, c_beta=eq.std))
        specs = out
    return specs


def train_config(cfg: ExperimentConfig, seed: int) -> TrainConfig:
    tr = cfg.train
    return TrainConfig(
        epochs=tr.epochs,
        batch_size=tr.batch_size,
        learning_rate=tr.learning_rate,
        optimiser=tr.optimiser,
        adam_beta1=tr.adam_beta1,
        adam_beta2=tr.adam_beta2,
        adam_eps=tr.adam_eps,
        lr_drop_epoch=tr.lr_drop_epoch,
        lr_drop_factor=tr.lr_drop_factor,
        strategy=tr.strategy,
        seed=seed,
        stop_early=tr.stop_early,
    )


def run_train(cfg: ExperimentConfig, out: Path | None = None, seed: int | None = None):
    """Train one network; writes the epoch log and parameters when ``out`` is given."""
    seed = cfg.seed if seed is None else seed
    data_cfg = cfg.dataset if cfg.data.seed is not None else replace(cfg.dataset, seed=seed)
    data = generate_dataset(data_cfg, cfg.base_dir)
    x_train, y_train = data[0], data[1]
    n_classes = int(max(y_train.max(), data[3].max() if len(data[3]) else 0)) + 1
    n_layers = len(cfg.network.hidden) + 1
    data_rng, init_rng, sampling = seed_streams(seed, n_layers)
    net = build_network(cfg, x_train.shape[1], n_classes, init_rng)
    tcfg = train_config(cfg, seed)
    total = tcfg.epochs * iterations_per_epoch(len(x_train), tcfg.batch_size)
    schedule = build_layer_schedule(cfg, total)
    net, tlog = train(net, schedule, data, tcfg, rngs=(data_rng, sampling))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / TRAIN_LOG, tlog.header(), tlog.rows())
        save_params(net, out / PARAMS)
    return net, tlog


# ----------------------------------------------------------------------------
# regcurve


def run_regcurve(cfg: ExperimentConfig, out: Path) -> Path:
    rc = cfg.regcurve
    act = RegularisedActivation(Quantiser(rc.levels, rc.thresholds), rc.family, NoiseParams(rc.mean, rc.std))
    x = np.linspace(rc.x_min, rc.x_max, rc.points)
    fwd = act.expectation(x)
    bwd = act.derivative(x)
    p = act.level_probabilities(x)
    header = ["x", "forward", "backward"] + [f"p_{k}" for k in range(act.quantiser.K)]
    rows = ([xi, fi, bi, *pi] for xi, fi, bi, pi in zip(x, fwd, bwd, p))
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / REGCURVE, header, rows)
    return out / REGCURVE


# ----------------------------------------------------------------------------
# check


def check_laws(cfg: ExperimentConfig) -> list[convergence.LayerLaw]:
    ck = cfg.check
    powers = ck.lambda_powers if len(ck.lambda_powers) == ck.layers else ck.lambda_powers * ck.layers
    return [
        convergence.LayerLaw(
            ck.family,
            convergence.PowerLaw(1.0, p),
            convergence.PowerLaw(ck.mean_coef, ck.mean_power),
            convergence.PowerLaw(ck.std_coef, ck.std_power),
        )
        for p in powers
    ]


def heaviside_network(widths, rng: np.random.Generator, family=NoiseFamily.LOGISTIC) -> Network:
    """Random network with Heaviside hidden units and an identity output layer."""
    layers = []
    n_hidden = len(widths) - 2
    for ell, (n_in, n_out) in enumerate(zip(widths, widths[1:])):
        w = rng.normal(0.0, 1.0, size=(n_out, n_in))
        b = rng.normal(0.0, 0.5, size=n_out)
        act = RegularisedActivation(heaviside_quantiser(), family) if ell < n_hidden else None
        layers.append(Dense(w, b, act))
    return Network(layers)


def run_check(cfg: ExperimentConfig, out: Path) -> convergence.HypothesisReport:
    ck = cfg.check
    laws = check_laws(cfg)
    grid = [2.0**-k for k in range(1, ck.grid_exponents + 1)]
    if ck.rate_powers is not None:
        rates = convergence.ConvergenceRate(ck.rate_powers)
        report = convergence.check_hypotheses(laws, rates, ck.epsilon, grid, ck.tol)
        searched = None
    else:
        report = convergence.search_rates(laws, epsilon=ck.epsilon, grid=grid, tol=ck.tol)
        searched = report is not None
        if report is None:
            rates = convergence.ConvergenceRate([1.0] * (ck.layers + 1))
            report = convergence.check_hypotheses(laws, rates, ck.epsilon, grid, ck.tol)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / CHECK, ["condition", "layer", "lambda", "value"], report.rows())

    rng = np.random.default_rng(cfg.seed)
    net = heaviside_network(ck.widths, rng, ck.family)
    x0 = rng.uniform(-1.0, 1.0, size=ck.widths[0])
    ratio = convergence.measure_ratio(net, x0, laws, grid, report.rates)
    write_csv(out / RATIO, ["lambda", "layer", "error", "ratio"], ratio.rows())

    lines = report.verdict_lines()
    lines.append("rates: " + ",".join(_cell(p) for p in report.rates.exponents))
    if searched is not None:
        lines.append(f"rate search: {'found' if searched else 'none found'}")
    lines.append(f"overall: {'pass' if report.passed else 'fail'}")
    (out / VERDICTS).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return report


# ----------------------------------------------------------------------------
# sweep

SUMMARY_HEADER = [
    "decay_interval",
    "strategy",
    "n_seeds",
    "mean_val_acc_quantised",
    "std_val_acc_quantised",
    "mean_val_acc_regularised",
    "mean_train_acc",
]
RUNS_HEADER = ["decay_interval", "strategy", "seed", "val_acc_quantised", "val_acc_regularised", "train_acc"]


def sweep_cells(cfg: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    """(label, config) for every admissible decay interval x strategy cell."""
    cells = []
    for strat in cfg.sweep.strategies:
        strategy = Strategy(strat)
        for interval in cfg.sweep.decay_intervals:
            if cfg.noise.static_variance and strategy is Strategy.EXPECTATION:
                log.info("skipping %s/%s: expectation with static variance", interval, strat)
                continue
            cell = replace(
                cfg,
                noise=replace(cfg.noise, decay_interval=interval),
                train=replace(cfg.train, strategy=strategy),
                warnings=[],
            )
            cells.append((interval, cell))
        if cfg.sweep.include_static and strategy is not Strategy.EXPECTATION:
            static = replace(
                cfg,
                noise=replace(cfg.noise, static_mean=True, static_variance=True, c_alpha=0.0),
                train=replace(cfg.train, strategy=strategy),
                warnings=[],
            )
            cells.append(("static", static))
    return cells


def run_sweep(cfg: ExperimentConfig, out: Path, seeds: list[int] | None = None) -> list[list]:
    seeds = cfg.sweep_seeds if seeds is None else seeds
    out.mkdir(parents=True, exist_ok=True)
    summary, runs = [], []
    for label, cell in sweep_cells(cfg):
        strat = cell.train.strategy.value
        finals = []
        for seed in seeds:
            _, tlog = run_train(cell, out / f"{label}_{strat}" / f"seed_{seed}", seed)
            f = tlog.final
            finals.append((f.val_acc_quantised, f.val_acc_regularised, f.train_acc))
            runs.append([label, strat, seed, *finals[-1]])
        arr = np.array(finals)
        summary.append(
            [label, strat, len(seeds), arr[:, 0].mean(), arr[:, 0].std(), arr[:, 1].mean(), arr[:, 2].mean()]
        )
    write_csv(out / SUMMARY, SUMMARY_HEADER, summary)
    write_csv(out / RUNS, RUNS_HEADER, runs)
    return summary
