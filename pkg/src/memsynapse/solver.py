"""DC operating points of the 3T1R synapse and the SET/RESET procedures.

Both operations share one series stack between a supply rail and ground::

    rail --[MP1, gate at V_READB]-- top --[memristor R]-- bot --[MN1, gate at V_gate]-- gnd

During READ the bottom node also drives the gate of MN2, whose drain current
(into a 1.2 V load) is the second-stage output.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from . import devices
from .devices import (MemristorParams, MemristorState, Mode, MosfetGeometry, MosfetParams,
                      Polarity, drain_current, ekv_current)
from .errors import InvalidStateError, SetError, SolverError

V_TOL = 1e-6
I_TOL = 1e-13  # residual bound; keeps the reported current within 1 pA of the true point
LEVELS_OHM = tuple(range(5000, 20001, 1000))


@dataclass(frozen=True)
class SynapseSizing:
    mp1: MosfetGeometry = devices.MP1_GEOMETRY
    mn1: MosfetGeometry = devices.MN1_GEOMETRY
    mn2: MosfetGeometry = devices.MN2_GEOMETRY


@dataclass(frozen=True)
class SupplyConfig:
    vdd_set: float = 3.3
    vdd_read: float = 1.2
    v_readb: float = 0.0
    v_gate: float = 0.6
    energy_window: float = 1e-6

    def __post_init__(self):
        if not 0 < self.vdd_set <= 4:
            raise ValueError(f"vdd_set out of (0, 4]: {self.vdd_set}")
        if not 0 < self.vdd_read <= 2:
            raise ValueError(f"vdd_read out of (0, 2]: {self.vdd_read}")
        if not 0 <= self.v_gate <= self.vdd_set:
            raise ValueError(f"v_gate out of [0, vdd_set]: {self.v_gate}")
        if not self.energy_window > 0:
            raise ValueError("energy_window must be positive")


@dataclass(frozen=True)
class SynapseModels:
    """Calibrated parameter set for every device in the cell."""

    nmos_io: MosfetParams
    pmos_io: MosfetParams
    mn2: MosfetParams
    memristor: MemristorParams = field(default_factory=MemristorParams)


@dataclass(frozen=True)
class Transistor:
    params: MosfetParams
    geom: MosfetGeometry

    def current(self, vgs, vds):
        return drain_current(self.params, self.geom, vgs, vds)


@dataclass(frozen=True)
class OperatingPoint:
    v_mem_top: float
    v_mem_bot: float
    i_stage1: float
    i_stage2: float = 0.0
    memristor_r: float = float("nan")

    @property
    def i_total(self) -> float:
        return self.i_stage1 + self.i_stage2


def solve_stack(rail: float, mp1: Transistor, memristor_r: float, mn1: Transistor,
                v_gate: float, v_readb: float = 0.0, v_tol: float = V_TOL,
                i_tol: float = I_TOL, max_outer: int = 200) -> OperatingPoint:
    """Solve the MP1 / memristor / MN1 stack by nested bisection.

    The outer loop bisects the bottom node on [0, rail]; for each trial value
    the inner loop bisects the top node on [bottom, rail] until the MP1
    current equals the memristor current. The outer residual is the
    memristor current minus the MN1 current, which falls monotonically as
    the bottom node rises.
    """
    if not memristor_r > 0:
        raise ValueError("memristor resistance must be positive")
    if not rail > 0:
        raise ValueError("rail must be positive")
    vgs_p = v_readb - rail

    def top_for(v_bot):
        lo, hi = v_bot, rail
        for _ in range(400):
            mid = 0.5 * (lo + hi)
            f = mp1.current(vgs_p, mid - rail) - (mid - v_bot) / memristor_r
            if f > 0:
                lo = mid
            else:
                hi = mid
            if hi - lo < v_tol and abs(f) < i_tol:
                return mid
            if 0.5 * (lo + hi) in (lo, hi):
                return mid  # float resolution reached
        raise SolverError("inner bisection on the top node did not converge", bracket=(lo, hi))

    lo, hi = 0.0, rail
    for _ in range(max_outer):
        v_bot = 0.5 * (lo + hi)
        v_top = top_for(v_bot)
        i_mem = (v_top - v_bot) / memristor_r
        i_n1 = mn1.current(v_gate, v_bot)
        g = i_mem - i_n1
        if g > 0:
            lo = v_bot
        else:
            hi = v_bot
        if hi - lo < v_tol and abs(g) < i_tol:
            return OperatingPoint(v_top, v_bot, i_n1, memristor_r=memristor_r)
    raise SolverError("outer bisection on the bottom node did not converge", bracket=(lo, hi))


def _stack_devices(sizing: SynapseSizing, models: SynapseModels):
    return Transistor(models.pmos_io, sizing.mp1), Transistor(models.nmos_io, sizing.mn1)


def solve_read_point(sizing: SynapseSizing, supplies: SupplyConfig, memristor_r: float,
                     models: SynapseModels | None = None,
                     v_gate: float | None = None) -> OperatingPoint:
    models = models or default_models()
    v_gate = supplies.v_gate if v_gate is None else v_gate
    mp1, mn1 = _stack_devices(sizing, models)
    op = solve_stack(supplies.vdd_read, mp1, memristor_r, mn1, v_gate, supplies.v_readb)
    i2 = drain_current(models.mn2, sizing.mn2, op.v_mem_bot, supplies.vdd_read)
    return OperatingPoint(op.v_mem_top, op.v_mem_bot, op.i_stage1, i2, memristor_r)


@dataclass(frozen=True)
class SetResult:
    state: MemristorState
    compliance_current: float
    op: OperatingPoint
    iterations: int


def apply_set(state: MemristorState, sizing: SynapseSizing, supplies: SupplyConfig,
              v_set_gate: float, models: SynapseModels | None = None,
              damping: float = 0.5, r_tol: float = 1e-2, max_iter: int = 100) -> SetResult:
    """Program an HRS device into the LRS under MN1 current compliance.

    Quasi-static fixed point: the final resistance is the SET-law image of
    the stack current it carries. Iterates ``R <- R + damping * (law(I(R)) - R)``
    from the HRS value until a step is smaller than ``r_tol`` ohms.
    """
    if state.mode is not Mode.HRS:
        raise InvalidStateError("SET requires a device in HRS; apply RESET first")
    if not 0 < damping <= 1:
        raise ValueError("damping must be in (0, 1]")
    models = models or default_models()
    mem = models.memristor
    mp1, mn1 = _stack_devices(sizing, models)
    r = state.resistance
    for k in range(1, max_iter + 1):
        op = solve_stack(supplies.vdd_set, mp1, r, mn1, v_set_gate, supplies.v_readb)
        target = devices.lrs_from_compliance(mem, max(op.i_stage1, 1e-30))
        r_next = r + damping * (target - r)
        done = abs(r_next - r) < r_tol
        r = r_next
        if done:
            r = min(max(r, mem.r_min), mem.r_max)
            op = solve_stack(supplies.vdd_set, mp1, r, mn1, v_set_gate, supplies.v_readb)
            return SetResult(MemristorState.lrs(r, mem), op.i_stage1, op, k)
    raise SetError(f"SET fixed point did not settle in {max_iter} iterations (last R={r:.1f})")


def apply_reset(state: MemristorState, params: MemristorParams = MemristorParams()) -> MemristorState:
    return MemristorState.hrs(params)


def set_power(supplies: SupplyConfig, compliance_current):
    return supplies.vdd_set * compliance_current


def read_power(supplies: SupplyConfig, op: OperatingPoint) -> float:
    return supplies.vdd_read * (op.i_stage1 + op.i_stage2)


def build_models(memristor: MemristorParams | None = None, sizing: SynapseSizing = SynapseSizing(),
                 supplies: SupplyConfig = SupplyConfig(),
                 read_target: float = devices.READ_TARGET_I2) -> SynapseModels:
    """Calibrate the full device set.

    The IO NMOS comes from its three anchors, the PMOS switch is derived from
    it, and MN2 is fitted on the bottom-node voltages of the 16 LRS levels
    read through ``sizing``.
    """
    nmos = devices.calibrate_nmos_io()
    pmos = devices.pmos_from_nmos(nmos)
    mp1, mn1 = Transistor(pmos, sizing.mp1), Transistor(nmos, sizing.mn1)
    nodes = [solve_stack(supplies.vdd_read, mp1, r, mn1, supplies.v_gate, supplies.v_readb).v_mem_bot
             for r in LEVELS_OHM]
    mn2 = devices.calibrate_mn2(nodes, read_target, sizing.mn2, vds=supplies.vdd_read)
    return SynapseModels(nmos, pmos, mn2, memristor or MemristorParams())


@functools.lru_cache(maxsize=None)
def default_models() -> SynapseModels:
    return build_models()


# --- batch path -------------------------------------------------------------
# Per-sample solves for Monte Carlo. Every element follows its own iteration
# sequence, so results do not depend on how samples are grouped.


@dataclass(frozen=True)
class DeviceBatch:
    """One transistor evaluated under per-sample (k', vth) perturbations."""

    params: MosfetParams
    geom: MosfetGeometry
    k_prime: np.ndarray
    vth: np.ndarray

    @classmethod
    def nominal(cls, params: MosfetParams, geom: MosfetGeometry, size: int) -> "DeviceBatch":
        return cls(params, geom, np.full(size, params.k_prime), np.full(size, params.vth))

    def current(self, vgs, vds):
        if self.params.polarity is Polarity.PMOS:
            vgs, vds = -vgs, -vds
        p = self.params
        return ekv_current(self.k_prime, self.vth, p.n_slope, p.lam, self.geom.aspect,
                           vgs, vds, p.v_thermal)


def solve_stack_batch(rail: float, mp1: DeviceBatch, memristor_r, mn1: DeviceBatch,
                      v_gate: float, v_readb: float = 0.0, iterations: int = 64):
    """Vectorized stack solve; returns (v_top, v_bot, i_stage1) arrays.

    Bisects the bottom node only: for a trial bottom voltage the MN1 current
    fixes the memristor drop, hence the top node, and the residual is the MP1
    current there minus the MN1 current. Same equations as ``solve_stack``
    with the inner search eliminated; a fixed iteration count drives the
    bracket to float resolution.
    """
    size = mn1.k_prime.shape[0]
    r = np.broadcast_to(np.asarray(memristor_r, dtype=float), (size,))
    lo = np.zeros(size)
    hi = np.full(size, float(rail))
    vgs_p = v_readb - rail
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        i_n1 = mn1.current(v_gate, mid)
        h = mp1.current(vgs_p, mid + i_n1 * r - rail) - i_n1
        up = h > 0
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    v_bot = 0.5 * (lo + hi)
    i1 = mn1.current(v_gate, v_bot)
    return v_bot + i1 * r, v_bot, i1


def apply_set_batch(memristor: MemristorParams, rail: float, mp1: DeviceBatch, mn1: DeviceBatch,
                    v_set_gate: float, v_readb: float = 0.0, damping: float = 0.5,
                    r_tol: float = 1e-2, max_iter: int = 100):
    """Vectorized SET fixed point; returns (resistance, compliance, converged)."""
    size = mn1.k_prime.shape[0]
    r = np.full(size, memristor.r_hrs)
    active = np.ones(size, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        _, _, i1 = solve_stack_batch(rail, mp1, r, mn1, v_set_gate, v_readb)
        target = devices.lrs_from_compliance(memristor, np.maximum(i1, 1e-30))
        r_next = r + damping * (target - r)
        done = np.abs(r_next - r) < r_tol
        r = np.where(active, r_next, r)
        active &= ~done
    r = np.clip(r, memristor.r_min, memristor.r_max)
    _, _, i1 = solve_stack_batch(rail, mp1, r, mn1, v_set_gate, v_readb)
    return r, i1, ~active
