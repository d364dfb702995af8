"""Seeded Monte Carlo over transistor mismatch and memristor scatter.

Random numbers come from Philox4x32-10 evaluated directly on counters
``(sample index, device id, stream)`` under a key derived from the seed, so
any draw can be regenerated in isolation and the statistics do not depend
on evaluation order or on how many workers share the samples.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .devices import MosfetParams
from .errors import McError
from .solver import (DeviceBatch, SupplyConfig, SynapseModels, SynapseSizing, apply_set_batch,
                     default_models, solve_stack_batch)
from . import devices

_MASK32 = np.uint64(0xFFFFFFFF)
_PHILOX_M = (np.uint64(0xD2511F53), np.uint64(0xCD9E8D57))
_PHILOX_W = (np.uint64(0x9E3779B9), np.uint64(0xBB67AE85))


def philox4x32(counter, key, rounds: int = 10):
    """Philox4x32 block function over arrays of counters.

    ``counter`` is a sequence of four uint32-valued arrays (broadcastable),
    ``key`` a pair of ints. Returns four uint64 arrays holding 32-bit words.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK32 for c in counter)
    k0, k1 = np.uint64(key[0] & 0xFFFFFFFF), np.uint64(key[1] & 0xFFFFFFFF)
    for _ in range(rounds):
        p0 = _PHILOX_M[0] * c0
        p1 = _PHILOX_M[1] * c2
        c0, c1, c2, c3 = ((p1 >> np.uint64(32)) ^ c1 ^ k0, p1 & _MASK32,
                          (p0 >> np.uint64(32)) ^ c3 ^ k1, p0 & _MASK32)
        k0 = (k0 + _PHILOX_W[0]) & _MASK32
        k1 = (k1 + _PHILOX_W[1]) & _MASK32
    return c0, c1, c2, c3


def unit_normals(seed: int, index, device_id: int, stream: int = 0):
    """Four independent N(0, 1) draws per counter via Box-Muller; shape (4, len(index))."""
    idx = np.atleast_1d(np.asarray(index, dtype=np.uint64))
    words = philox4x32((idx & _MASK32, idx >> np.uint64(32), np.full_like(idx, device_id),
                        np.full_like(idx, stream)), (seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF))
    u = [(w.astype(np.float64) + 0.5) / 4294967296.0 for w in words]
    out = np.empty((4, idx.size))
    for j in (0, 2):
        rad = np.sqrt(-2.0 * np.log(u[j]))
        out[j] = rad * np.cos(2.0 * np.pi * u[j + 1])
        out[j + 1] = rad * np.sin(2.0 * np.pi * u[j + 1])
    return out


DEVICE_IDS = {"mp1": 0, "mn1": 1, "mn2": 2, "memristor": 3}
# Thick-oxide (IO) devices share a_vth; the low-threshold read device is a
# thin-oxide part and uses a scaled coefficient.
DEVICE_CLASS = {"mp1": "io", "mn1": "io", "mn2": "core"}


@dataclass(frozen=True)
class MismatchParams:
    a_vth: float = 0.0  # mV*um, IO devices
    a_beta: float = 1.0  # %*um
    core_vth_scale: float = 0.5
    include_memristor_noise: bool = False

    def __post_init__(self):
        if self.a_vth < 0 or self.a_beta < 0 or self.core_vth_scale < 0:
            raise ValueError("mismatch coefficients must be non-negative")

    def sigma_vth(self, device: str, area: float) -> float:
        a = self.a_vth * (self.core_vth_scale if DEVICE_CLASS[device] == "core" else 1.0)
        return a * 1e-3 / math.sqrt(area)

    def sigma_beta(self, area: float) -> float:
        return self.a_beta / 100.0 / math.sqrt(area)


@dataclass(frozen=True)
class SampleDraw:
    delta_vth: dict
    delta_k_factor: dict
    memristor_noise: float | None = None


def _geometries(sizing: SynapseSizing):
    return {"mp1": sizing.mp1, "mn1": sizing.mn1, "mn2": sizing.mn2}


def draw_batch(mismatch: MismatchParams, sizing: SynapseSizing, seed: int, indices):
    """Per-device (delta_vth, k multiplier) arrays plus memristor draws."""
    idx = np.asarray(indices, dtype=np.uint64)
    if np.any(np.asarray(indices) < 0):
        raise ValueError("sample indices must be non-negative")
    dvth, kfac = {}, {}
    for name, geom in _geometries(sizing).items():
        z = unit_normals(seed, idx, DEVICE_IDS[name])
        dvth[name] = mismatch.sigma_vth(name, geom.area) * z[0]
        kfac[name] = 1.0 + mismatch.sigma_beta(geom.area) * z[1]
    noise = unit_normals(seed, idx, DEVICE_IDS["memristor"])[0] \
        if mismatch.include_memristor_noise else None
    return dvth, kfac, noise


def draw_sample(mismatch: MismatchParams, sizing: SynapseSizing, seed: int, index: int) -> SampleDraw:
    if index < 0:
        raise ValueError("sample index must be non-negative")
    dvth, kfac, noise = draw_batch(mismatch, sizing, seed, [index])
    return SampleDraw({k: float(v[0]) for k, v in dvth.items()},
                      {k: float(v[0]) for k, v in kfac.items()},
                      None if noise is None else float(noise[0]))


@dataclass(frozen=True)
class McStats:
    mean: float
    std_dev: float
    ratio: float
    bin_edges: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    n: int
    failures: int = 0


HIST_BINS = 50


def summarize(values, failures: int = 0) -> McStats:
    """Exact-sum statistics (order independent) and a mean +/- 5 sigma histogram."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("need at least two samples")
    shift = x[0]
    mean = shift + math.fsum(x - shift) / n
    dev = x - mean
    std = math.sqrt(math.fsum(dev * dev) / (n - 1))
    ratio = std / mean if mean > 0 else float("nan")
    half = 5.0 * std if std > 0 else max(abs(mean) * 1e-6, 1e-30)
    edges = np.linspace(mean - half, mean + half, HIST_BINS + 1)
    counts, _ = np.histogram(np.clip(x, edges[0], edges[-1]), bins=edges)
    return McStats(mean, std, ratio, edges, counts, n, failures)


def _batch(params: MosfetParams, geom, dvth, kfac) -> DeviceBatch:
    return DeviceBatch(params, geom, params.k_prime * kfac, params.vth + dvth)


CHUNK = 1000


def _run_chunks(fn, n: int, workers: int):
    starts = range(0, n, CHUNK)
    jobs = [np.arange(s, min(s + CHUNK, n)) for s in starts]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, jobs))
    else:
        parts = [fn(j) for j in jobs]
    return [np.concatenate(p) for p in zip(*parts)]


def _check(n: int, ok):
    failures = int(np.count_nonzero(~ok))
    if failures > 0.01 * n:
        raise McError(f"{failures} of {n} samples failed to converge")
    return failures


def set_samples(n: int, v_set_gate: float, sizing: SynapseSizing, supplies: SupplyConfig,
                mismatch: MismatchParams, seed: int, models: SynapseModels | None = None,
                workers: int = 1):
    """Per-sample SET results ordered by index: (compliance, resistance, converged)."""
    models = models or default_models()
    mem = models.memristor

    def chunk(idx):
        dvth, kfac, noise = draw_batch(mismatch, sizing, seed, idx)
        mp1 = _batch(models.pmos_io, sizing.mp1, dvth["mp1"], kfac["mp1"])
        mn1 = _batch(models.nmos_io, sizing.mn1, dvth["mn1"], kfac["mn1"])
        r, i1, ok = apply_set_batch(mem, supplies.vdd_set, mp1, mn1, v_set_gate, supplies.v_readb)
        if noise is not None:
            r = devices.stochastic_lrs(mem, r, noise)
        return i1, r, ok

    return _run_chunks(chunk, n, workers)


def mc_set(n: int, v_set_gate: float, sizing: SynapseSizing = SynapseSizing(),
           supplies: SupplyConfig = SupplyConfig(), mismatch: MismatchParams = MismatchParams(),
           seed: int = 0, models: SynapseModels | None = None, workers: int = 1) -> McStats:
    """Statistics of the SET compliance current over ``n`` mismatch samples."""
    if n < 100:
        raise ValueError("Monte Carlo needs n >= 100")
    i1, _, ok = set_samples(n, v_set_gate, sizing, supplies, mismatch, seed, models, workers)
    failures = _check(n, ok)
    return summarize(i1[ok], failures)


def read_samples(n: int, memristor_r: float, sizing: SynapseSizing, supplies: SupplyConfig,
                 mismatch: MismatchParams, seed: int, models: SynapseModels | None = None,
                 workers: int = 1):
    """Per-sample READ currents ordered by index: (i_stage1, i_stage2)."""
    models = models or default_models()
    mem = models.memristor

    def chunk(idx):
        dvth, kfac, noise = draw_batch(mismatch, sizing, seed, idx)
        mp1 = _batch(models.pmos_io, sizing.mp1, dvth["mp1"], kfac["mp1"])
        mn1 = _batch(models.nmos_io, sizing.mn1, dvth["mn1"], kfac["mn1"])
        mn2 = _batch(models.mn2, sizing.mn2, dvth["mn2"], kfac["mn2"])
        r = np.full(idx.size, float(memristor_r))
        if noise is not None:
            r = devices.stochastic_lrs(mem, r, noise)
        _, v_bot, i1 = solve_stack_batch(supplies.vdd_read, mp1, r, mn1, supplies.v_gate,
                                         supplies.v_readb)
        i2 = mn2.current(v_bot, supplies.vdd_read)
        return i1, i2

    return _run_chunks(chunk, n, workers)


def mc_read(n: int, memristor_r: float, sizing: SynapseSizing = SynapseSizing(),
            supplies: SupplyConfig = SupplyConfig(), mismatch: MismatchParams = MismatchParams(),
            seed: int = 0, models: SynapseModels | None = None, workers: int = 1) -> McStats:
    """Statistics of the second-stage READ current at a fixed resistance."""
    if n < 100:
        raise ValueError("Monte Carlo needs n >= 100")
    _, i2 = read_samples(n, memristor_r, sizing, supplies, mismatch, seed, models, workers)
    ok = np.isfinite(i2)
    failures = _check(n, ok)
    return summarize(i2[ok], failures)


SET_RATIO_ANCHOR = (1.2, 0.0974)


def calibrate_mismatch(target_ratio: float = SET_RATIO_ANCHOR[1],
                       v_set_gate: float = SET_RATIO_ANCHOR[0], n: int = 5000, seed: int = 0,
                       base: MismatchParams = MismatchParams(), sizing: SynapseSizing = SynapseSizing(),
                       supplies: SupplyConfig = SupplyConfig(),
                       models: SynapseModels | None = None, workers: int = 1) -> MismatchParams:
    """Fit the IO threshold coefficient so the SET current spread hits ``target_ratio``.

    Everything else in ``base`` is kept; the coefficient is then meant to be
    held fixed for every other experiment.
    """
    models = models or default_models()

    def err(a_vth):
        m = MismatchParams(a_vth, base.a_beta, base.core_vth_scale, False)
        return mc_set(n, v_set_gate, sizing, supplies, m, seed, models, workers).ratio - target_ratio

    a = brentq(err, 0.0, 300.0, xtol=1e-4)
    return MismatchParams(a, base.a_beta, base.core_vth_scale, base.include_memristor_noise)
