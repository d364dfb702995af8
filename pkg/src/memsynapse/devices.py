"""Analytic device models: an all-region MOSFET law and the memristor SET law.

The transistor model is the bulk-referenced EKV interpolation

    Id = (1 + lambda*vds) * 2*n*k'*(W/L)*Vt^2 *
         [ln^2(1 + exp((vgs - vth)/(2*n*Vt))) - ln^2(1 + exp((vgs - vth - n*vds)/(2*n*Vt)))]

which is smooth from weak to strong inversion. It is the only device law the
circuit solver uses; the calibration routines below pin its parameters to a
handful of anchor currents.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .errors import CalibrationError

V_THERMAL = 0.0258  # volts, 300 K


class Polarity(enum.Enum):
    NMOS = "nmos"
    PMOS = "pmos"


@dataclass(frozen=True)
class MosfetGeometry:
    """Drawn channel width and length, in micrometers."""

    width: float
    length: float

    def __post_init__(self):
        if not (self.width > 0 and self.length > 0):
            raise ValueError(f"geometry must be positive, got W={self.width} L={self.length}")

    @property
    def aspect(self) -> float:
        return self.width / self.length

    @property
    def area(self) -> float:
        return self.width * self.length


# Table sizing of the synapse (W/L in um).
MP1_GEOMETRY = MosfetGeometry(2.5, 0.5)
MN1_GEOMETRY = MosfetGeometry(5.0, 0.5)
MN2_GEOMETRY = MosfetGeometry(0.5, 2.5)


@dataclass(frozen=True)
class MosfetParams:
    polarity: Polarity
    vth: float
    k_prime: float
    n_slope: float
    lam: float = 0.0
    v_thermal: float = V_THERMAL

    def __post_init__(self):
        if not 0.0 < self.vth < 1.5:
            raise ValueError(f"vth out of range (0, 1.5): {self.vth}")
        if not 1.0 <= self.n_slope <= 2.0:
            raise ValueError(f"n_slope out of range [1, 2]: {self.n_slope}")
        if not self.k_prime > 0:
            raise ValueError(f"k_prime must be positive: {self.k_prime}")
        if not 0.0 <= self.lam <= 0.5:
            raise ValueError(f"lambda out of range [0, 0.5]: {self.lam}")


def _softplus(x: float) -> float:
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def ekv_current(k_prime, vth, n_slope, lam, aspect, vgs, vds, v_thermal=V_THERMAL):
    """Vectorized NMOS-convention current; every argument may be an array.

    Used directly by the batch solvers, where per-sample ``k_prime`` and
    ``vth`` arrays carry mismatch.
    """
    scale = 2.0 * n_slope * v_thermal
    forward = np.logaddexp(0.0, (vgs - vth) / scale)
    reverse = np.logaddexp(0.0, (vgs - vth - n_slope * vds) / scale)
    spec = 2.0 * n_slope * k_prime * aspect * v_thermal**2
    return (1.0 + lam * vds) * spec * (forward * forward - reverse * reverse)


def drain_current(params: MosfetParams, geom: MosfetGeometry, vgs, vds):
    """Drain current in amps for terminal voltages referenced to the source.

    PMOS devices take their real (negative) ``vgs`` and ``vds``; the signs are
    flipped internally, so a conducting PMOS also returns a positive current.
    A reversed channel (``vds`` of the wrong sign) conducts backwards and
    returns a negative value. Scalars go through ``math``; arrays through numpy.
    """
    if params.polarity is Polarity.PMOS:
        vgs, vds = -vgs, -vds
    if np.ndim(vgs) or np.ndim(vds):
        vgs = np.asarray(vgs, dtype=float)
        vds = np.asarray(vds, dtype=float)
        if not (np.all(np.isfinite(vgs)) and np.all(np.isfinite(vds))):
            raise ValueError("terminal voltages must be finite")
        return ekv_current(params.k_prime, params.vth, params.n_slope, params.lam,
                           geom.aspect, vgs, vds, params.v_thermal)
    if not (math.isfinite(vgs) and math.isfinite(vds)):
        raise ValueError(f"terminal voltages must be finite (vgs={vgs}, vds={vds})")
    n = params.n_slope
    scale = 2.0 * n * params.v_thermal
    forward = _softplus((vgs - params.vth) / scale)
    reverse = _softplus((vgs - params.vth - n * vds) / scale)
    spec = 2.0 * n * params.k_prime * geom.aspect * params.v_thermal**2
    return (1.0 + params.lam * vds) * spec * (forward * forward - reverse * reverse)


# Anchor currents for the thick-oxide NMOS (MN1 sizing, vds = 1 V).
IO_ANCHORS = ((0.6, 1.8e-6), (0.8, 34.3e-6), (1.2, 291.8e-6))
ANCHOR_VDS = 1.0


def _nmos(k_prime, vth, n_slope):
    return MosfetParams(Polarity.NMOS, vth=vth, k_prime=k_prime, n_slope=n_slope)


def calibrate_nmos_io(anchors=IO_ANCHORS, geom: MosfetGeometry = MN1_GEOMETRY,
                      vds: float = ANCHOR_VDS, max_iter: int = 200) -> MosfetParams:
    """Solve (k', vth, n) so the model passes through three (vgs, Id) anchors.

    Newton's method on log-current residuals with a central-difference
    Jacobian and step halving. Channel-length modulation is held at zero.
    """
    anchors = tuple((float(v), float(i)) for v, i in anchors)
    if len(anchors) != 3:
        raise ValueError("exactly three anchors are required")

    def currents(x):
        k, vth, n = math.exp(x[0]), x[1], x[2]
        return np.array([ekv_current(k, vth, n, 0.0, geom.aspect, v, vds) for v, _ in anchors])

    targets = np.array([i for _, i in anchors])

    def residual(x):
        with np.errstate(all="ignore"):
            return np.log(currents(x) / targets)

    vth0, n0 = 0.59, 1.25
    v_hi, i_hi = anchors[-1]
    k0 = i_hi / ekv_current(1.0, vth0, n0, 0.0, geom.aspect, v_hi, vds)
    x = np.array([math.log(k0), vth0, n0])
    r = residual(x)
    for _ in range(max_iter):
        if np.all(np.abs(currents(x) - targets) < 1e-9) and np.max(np.abs(r)) < 1e-13:
            break
        jac = np.empty((3, 3))
        for j, h in enumerate((1e-6, 1e-7, 1e-7)):
            dx = np.zeros(3)
            dx[j] = h
            jac[:, j] = (residual(x + dx) - residual(x - dx)) / (2 * h)
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            break
        norm = np.linalg.norm(r)
        t = 1.0
        while t > 1e-6:
            cand = x + t * step
            rc = residual(cand)
            if 1.0 <= cand[2] <= 2.0 and 0 < cand[1] < 1.5 and np.all(np.isfinite(rc)) \
                    and np.linalg.norm(rc) < norm:
                x, r = cand, rc
                break
            t *= 0.5
        else:
            break
    abs_res = currents(x) - targets
    if not np.all(np.abs(abs_res) < 1e-9):
        raise CalibrationError("NMOS anchor calibration did not converge", residuals=abs_res)
    return _nmos(math.exp(x[0]), float(x[1]), float(x[2]))


def pmos_from_nmos(nmos: MosfetParams, mobility_ratio: float = 0.4,
                   vth: float = 0.65) -> MosfetParams:
    """PMOS switch derived from the calibrated NMOS."""
    return replace(nmos, polarity=Polarity.PMOS, k_prime=nmos.k_prime * mobility_ratio, vth=vth)


MN2_VTH = 0.35
MN2_N_SLOPE = 1.3
READ_TARGET_I2 = 5.4e-6
ADC_RESOLUTION = 20e-9


def level_spacing(currents) -> float:
    """Smallest absolute current step between adjacent levels."""
    c = np.asarray(currents, dtype=float)
    if c.size < 2:
        return float("inf")
    return float(np.min(np.abs(np.diff(c))))


def calibrate_mn2(node_voltages, target_avg_current: float = READ_TARGET_I2,
                  geom: MosfetGeometry = MN2_GEOMETRY, vds: float = 1.2,
                  vth: float = MN2_VTH, n_slope: float = MN2_N_SLOPE,
                  min_spacing: float = ADC_RESOLUTION, n_step: float = 0.05) -> MosfetParams:
    """Fit the read transistor's k' to a mean output current over the levels.

    ``node_voltages`` are the solved MN2 gate voltages, one per programmed
    level in level order. With vth fixed, k' is found by a 1-D root search;
    if adjacent levels end up closer than ``min_spacing`` the slope factor is
    lowered in ``n_step`` decrements and the fit repeated.
    """
    vg = np.asarray(node_voltages, dtype=float)
    if vg.size < 2:
        raise ValueError("need at least two node voltages")
    n = n_slope
    spacing = 0.0
    while n >= 1.0 - 1e-12:
        n = max(n, 1.0)
        unit = ekv_current(1.0, vth, n, 0.0, geom.aspect, vg, vds)

        def mean_err(log_k):
            return math.exp(log_k) * float(np.mean(unit)) / target_avg_current - 1.0

        log_k = brentq(mean_err, math.log(1e-12), math.log(10.0), xtol=1e-14, rtol=1e-14)
        params = MosfetParams(Polarity.NMOS, vth=vth, k_prime=math.exp(log_k), n_slope=n)
        spacing = level_spacing(drain_current(params, geom, vg, np.full_like(vg, vds)))
        if spacing >= min_spacing:
            return params
        if n == 1.0:
            break
        n = round(n - n_step, 10)
    raise CalibrationError(
        f"read-level spacing {spacing:.3e} A below {min_spacing:.3e} A for every slope factor >= 1",
        spacing=spacing)


@dataclass(frozen=True)
class MemristorParams:
    r_hrs: float = 100e3
    anchor_lo: tuple = (34.3e-6, 20e3)
    anchor_hi: tuple = (291.8e-6, 5e3)
    r_min: float = 4e3
    r_max: float = 100e3
    sigma0: float = 250.0
    gamma: float = 1.5

    def __post_init__(self):
        if not self.r_min <= self.r_lrs_low <= self.r_lrs_high <= self.r_max <= self.r_hrs:
            raise ValueError("need r_min <= LRS anchors <= r_max <= r_hrs")
        if self.alpha >= 0:
            raise ValueError("SET law must decrease with current (alpha < 0)")
        if self.sigma0 < 0:
            raise ValueError("sigma0 must be non-negative")

    @property
    def r_lrs_low(self) -> float:
        return min(self.anchor_lo[1], self.anchor_hi[1])

    @property
    def r_lrs_high(self) -> float:
        return max(self.anchor_lo[1], self.anchor_hi[1])

    @property
    def alpha(self) -> float:
        (i_lo, r_lo), (i_hi, r_hi) = self.anchor_lo, self.anchor_hi
        return math.log(r_lo / r_hi) / math.log(i_lo / i_hi)


class Mode(enum.Enum):
    HRS = "hrs"
    LRS = "lrs"


@dataclass(frozen=True)
class MemristorState:
    mode: Mode
    resistance: float

    @classmethod
    def hrs(cls, params: MemristorParams = MemristorParams()) -> "MemristorState":
        return cls(Mode.HRS, params.r_hrs)

    @classmethod
    def lrs(cls, resistance: float, params: MemristorParams = MemristorParams()) -> "MemristorState":
        if not params.r_min <= resistance <= params.r_max:
            raise ValueError(f"LRS resistance {resistance} outside [{params.r_min}, {params.r_max}]")
        return cls(Mode.LRS, float(resistance))


def lrs_from_compliance(params: MemristorParams, i_compliance):
    """Resistance left behind by a SET limited to ``i_compliance`` amps.

    Two-anchor power law, clamped to [r_min, r_max]. Accepts arrays.
    """
    if np.any(np.asarray(i_compliance) <= 0) or not np.all(np.isfinite(i_compliance)):
        raise ValueError("compliance current must be positive and finite")
    i_lo, r_lo = params.anchor_lo
    r = r_lo * (np.asarray(i_compliance, dtype=float) / i_lo) ** params.alpha
    r = np.clip(r, params.r_min, params.r_max)
    return float(r) if np.ndim(r) == 0 else r


def compliance_for_lrs(params: MemristorParams, resistance: float) -> float:
    """Inverse of the unclamped SET law: the current that programs ``resistance``."""
    if resistance <= 0:
        raise ValueError("resistance must be positive")
    i_lo, r_lo = params.anchor_lo
    return i_lo * (resistance / r_lo) ** (1.0 / params.alpha)


def stochastic_lrs(params: MemristorParams, nominal_r, noise_draw):
    """Cycle-to-cycle LRS scatter; spread grows as (R / r_min)**gamma."""
    sigma = params.sigma0 * (np.asarray(nominal_r, dtype=float) / params.r_min) ** params.gamma
    r = np.clip(nominal_r + np.asarray(noise_draw) * sigma, params.r_min, params.r_hrs)
    return float(r) if np.ndim(r) == 0 else r
