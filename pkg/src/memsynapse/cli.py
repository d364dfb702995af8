"""Command-line experiment runner.

Each invocation runs one experiment and writes its tables into a fresh run
directory ``<out>/<experiment>/run-NNNN``, alongside ``resolved_config.yaml``
and ``manifest.json``. Exit status: 0 success, 1 invalid input, 2 numerical
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, analysis, config, snn, variation
from .devices import ANCHOR_VDS, IO_ANCHORS, MN1_GEOMETRY, drain_current
from .errors import IngestionError, SynapseError
from .solver import LEVELS_OHM, SynapseSizing, build_models, solve_read_point
from .tables import write_table

OUT_ENV = "MEMSYNAPSE_OUT"
DEFAULT_OUT = "runs"


class Context:
    """Resolved objects shared by the experiment functions of one run."""

    def __init__(self, cfg: dict, out: Path):
        self.cfg = cfg
        self.out = out
        self.seed = cfg["seed"]
        self.threads = cfg["threads"]
        self.supplies = config.build_supplies(cfg)
        self.sizing = config.build_sizing(cfg)
        self.memristor = config.build_memristor(cfg)
        self._models = None
        self._mismatch = None
        self._cases = None

    @property
    def models(self):
        # Calibration anchors refer to the reference sizing, whatever is being simulated.
        if self._models is None:
            self._models = build_models(self.memristor, SynapseSizing(), self.supplies,
                                        self.cfg["model"]["read_target"])
        return self._models

    def table(self, stem, header, rows):
        write_table(self.out, stem, header, rows)


def run_calibrate(ctx: Context):
    m = ctx.models
    rows = []
    for name, p in (("nmos_io", m.nmos_io), ("pmos_io", m.pmos_io), ("mn2", m.mn2)):
        rows.append((name, p.polarity.value, p.vth, p.k_prime, p.n_slope, p.lam))
    ctx.table("device_params", ["device", "polarity", "vth_v", "k_prime_a_per_v2", "n_slope",
                                "lambda_per_v"], rows)
    anchors = []
    for vgs, target in IO_ANCHORS:
        i = drain_current(m.nmos_io, MN1_GEOMETRY, vgs, ANCHOR_VDS)
        anchors.append((vgs, ANCHOR_VDS, target, i, (i - target) / target))
    ctx.table("anchors", ["vgs_v", "vds_v", "target_a", "model_a", "rel_err"], anchors)
    mem = m.memristor
    ctx.table("memristor_params", ["r_hrs_ohm", "r_min_ohm", "r_max_ohm", "alpha", "sigma0_ohm",
                                   "gamma"],
              [(mem.r_hrs, mem.r_min, mem.r_max, mem.alpha, mem.sigma0, mem.gamma)])


def run_sweep_set(ctx: Context):
    rows = analysis.sweep_set(ctx.cfg["sweep_set"]["v_gates"], ctx.sizing, ctx.supplies, ctx.models)
    ctx.table("set_sweep", ["v_gate_v", "compliance_a", "final_r_ohm", "power_w", "energy_j",
                            "status"],
              [(r.v_gate, r.compliance_current, r.final_r, r.power, r.energy, r.status)
               for r in rows])


def run_sweep_read(ctx: Context):
    s = ctx.cfg["sweep_read"]
    rows = analysis.sweep_read(s["v_gates"], ctx.sizing, ctx.supplies, tuple(s["r_pair"]), ctx.models)
    ctx.table("read_sweep", ["v_gate_v", "vrange_v", "i1_lo_a", "i1_hi_a", "i2_lo_a", "i2_hi_a",
                             "status"],
              [(r.v_gate, r.vrange, r.i1_lo, r.i1_hi, r.i2_lo, r.i2_hi, r.status) for r in rows])
    levels = []
    for r in LEVELS_OHM:
        op = solve_read_point(ctx.sizing, ctx.supplies, r, ctx.models)
        p = ctx.supplies.vdd_read * op.i_total
        levels.append((r, op.v_mem_top, op.v_mem_bot, op.i_stage1, op.i_stage2, p,
                       p * ctx.supplies.energy_window))
    ctx.table("read_levels", ["level_ohm", "v_top_v", "v_bot_v", "i1_a", "i2_a", "power_w",
                              "energy_j"], levels)
    rp = analysis.read_power_energy(ctx.sizing, ctx.supplies, ctx.models)
    ctx.table("read_power", ["avg_power_w", "avg_energy_j"], [(rp.avg_power, rp.avg_energy)])


def _mismatch(ctx: Context) -> variation.MismatchParams:
    if ctx._mismatch is None:
        mc = ctx.cfg["monte_carlo"]
        base = variation.MismatchParams(mc["a_vth"] or 0.0, mc["a_beta"], mc["core_vth_scale"],
                                        mc["memristor_noise"])
        if mc["a_vth"] is None:
            base = variation.calibrate_mismatch(mc["calibration_ratio"], mc["calibration_gate"],
                                                mc["n"], ctx.seed, base, ctx.sizing, ctx.supplies,
                                                ctx.models, ctx.threads)
        ctx._mismatch = base
        ctx.table("mismatch", ["a_vth_mv_um", "a_beta_pct_um", "core_vth_scale", "memristor_noise",
                               "calibrated"],
                  [(base.a_vth, base.a_beta, base.core_vth_scale, base.include_memristor_noise,
                    mc["a_vth"] is None)])
    return ctx._mismatch


def _hist_rows(key, stats):
    e = stats.bin_edges
    return [(key, float(e[i]), float(e[i + 1]), int(c)) for i, c in enumerate(stats.counts)]


def run_mc_set(ctx: Context):
    mc, mm = ctx.cfg["monte_carlo"], _mismatch(ctx)
    summary, hist = [], []
    for v in mc["set_gates"]:
        st = variation.mc_set(mc["n"], v, ctx.sizing, ctx.supplies, mm, ctx.seed, ctx.models,
                              ctx.threads)
        summary.append((v, st.n, st.mean, st.std_dev, st.ratio, st.failures))
        hist.extend(_hist_rows(v, st))
    ctx.table("mc_set", ["v_gate_v", "n", "mean_a", "std_a", "ratio", "failures"], summary)
    ctx.table("mc_set_hist", ["v_gate_v", "bin_lo_a", "bin_hi_a", "count"], hist)


def run_mc_read(ctx: Context):
    mc, mm = ctx.cfg["monte_carlo"], _mismatch(ctx)
    summary, hist = [], []
    for r in mc["read_resistances"]:
        st = variation.mc_read(mc["n"], r, ctx.sizing, ctx.supplies, mm, ctx.seed, ctx.models,
                               ctx.threads)
        summary.append((r, st.n, st.mean, st.std_dev, st.ratio, st.failures))
        hist.extend(_hist_rows(r, st))
    ctx.table("mc_read", ["r_ohm", "n", "mean_a", "std_a", "ratio", "failures"], summary)
    ctx.table("mc_read_hist", ["r_ohm", "bin_lo_a", "bin_hi_a", "count"], hist)


def _case_results(ctx: Context):
    if ctx._cases is None:
        cases = {c: analysis.DESIGN_CASES[c] for c in ctx.cfg["readability"]["cases"]}
        ctx._cases = analysis.evaluate_cases(ctx.supplies, ctx.models,
                                             ctx.cfg["model"]["adc_resolution"], cases)
    return ctx._cases


def run_readability(ctx: Context):
    levels, summary = [], []
    for cid, (table, rep) in _case_results(ctx).items():
        for lv, ok in zip(table.levels, rep.readable_flags):
            levels.append((cid, lv.resistance, format(lv.code, "04b"), lv.i_stage2, ok))
        summary.append((cid, rep.readable_count, rep.readability_pct, rep.bit_precision))
    ctx.table("resolution_table", ["case", "level_ohm", "code", "i2_amp", "readable"], levels)
    ctx.table("readability", ["case", "readable_count", "readability_pct", "bit_precision"], summary)


def _train_config(ctx: Context, seed: int) -> snn.TrainConfig:
    s = ctx.cfg["snn"]
    return snn.TrainConfig(population=s["population"], generations=s["generations"],
                           mutation_rate=s["mutation_rate"], seed=seed, sim_window=s["sim_window"],
                           max_rate=s["max_rate"], hidden=s["hidden"], max_delay=s["max_delay"])


def _dataset(ctx: Context, source: str, seed: int) -> snn.Dataset:
    s = ctx.cfg["snn"]
    path = Path(source)
    if not path.suffix and not path.exists():
        path, name = snn.bundled_dataset(source), source
    else:
        name = path.stem
    if not Path(path).exists():
        raise IngestionError(f"dataset not found: {source}")
    return snn.load_dataset(path, name, s["split_fraction"], seed, s["label_column"])


def _trained(ctx: Context):
    """Yield (dataset, seed, network, train config) for every configured dataset and seed."""
    s = ctx.cfg["snn"]
    for source in s["datasets"]:
        for seed in s["seeds"]:
            ds = _dataset(ctx, source, seed)
            cfg = _train_config(ctx, seed)
            yield ds, seed, snn.evolve(ds, cfg), cfg


def run_snn_train(ctx: Context):
    rows = []
    for ds, seed, net, cfg in _trained(ctx):
        rows.append((ds.name, seed, int(net.weights.size),
                     snn.accuracy(net, ds, "train", cfg.sim_window, cfg.max_rate),
                     snn.accuracy(net, ds, "test", cfg.sim_window, cfg.max_rate)))
    ctx.table("snn_train", ["dataset", "seed", "synapses", "train_acc", "test_acc"], rows)


def run_snn_cases(ctx: Context):
    levels = ctx.cfg["snn"]["levels"]
    if levels is None:
        levels = {f"case{cid}": rep.readable_count for cid, (_, rep) in _case_results(ctx).items()}
    rows = []
    for ds, seed, net, cfg in _trained(ctx):
        for r in snn.case_study(net, ds, levels, cfg.sim_window, cfg.max_rate):
            rows.append((ds.name, r.case, "" if r.levels is None else r.levels, seed,
                         r.train_acc, r.test_acc))
    ctx.table("snn_cases", ["dataset", "case", "levels", "seed", "train_acc", "test_acc"], rows)


def run_report_all(ctx: Context):
    for fn in (run_calibrate, run_sweep_set, run_sweep_read, run_mc_set, run_mc_read,
               run_readability, run_snn_cases):
        fn(ctx)


RUNNERS = {
    "calibrate": run_calibrate,
    "sweep-set": run_sweep_set,
    "sweep-read": run_sweep_read,
    "mc-set": run_mc_set,
    "mc-read": run_mc_read,
    "readability": run_readability,
    "snn-train": run_snn_train,
    "snn-cases": run_snn_cases,
    "report-all": run_report_all,
}


def _next_run_dir(root: Path, experiment: str) -> Path:
    base = root / experiment
    base.mkdir(parents=True, exist_ok=True)
    k = 1
    while True:
        d = base / f"run-{k:04d}"
        try:
            d.mkdir()
            return d
        except FileExistsError:
            k += 1


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(cfg: dict, out_root) -> Path:
    """Execute one resolved experiment; returns the run directory."""
    out = _next_run_dir(Path(out_root), cfg["experiment"])
    (out / "resolved_config.yaml").write_text(config.dump(cfg), encoding="utf-8")
    start = time.perf_counter()
    with np.errstate(all="ignore"):
        RUNNERS[cfg["experiment"]](Context(cfg, out))
    wall = time.perf_counter() - start
    files = sorted(p for p in out.iterdir() if p.suffix in (".csv", ".dat"))
    manifest = {
        "experiment": cfg["experiment"],
        "input_hash": config.digest(cfg),
        "seed": cfg["seed"],
        "version": __version__,
        "wall_time_s": round(wall, 3),
        "started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "files": {p.name: _sha256(p) for p in files},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="memsynapse",
                                 description="3T1R memristive synapse experiments.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in config.EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--out", help=f"output root (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--threads", type=int, help="Monte Carlo worker threads")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = config.load(args.config) if args.config else {}
        cfg = config.resolve(raw, experiment=args.experiment, seed=args.seed, threads=args.threads)
    except (config.ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out_root = args.out or cfg["output"] or os.environ.get(OUT_ENV) or DEFAULT_OUT
    try:
        out = run(cfg, out_root)
    except (IngestionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SynapseError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
