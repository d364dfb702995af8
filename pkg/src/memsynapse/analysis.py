"""Sizing sweeps, power/energy accounting and 4-bit readability of the six design cases."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .devices import ADC_RESOLUTION, MemristorState, MosfetGeometry
from .errors import SynapseError
from .solver import (LEVELS_OHM, SupplyConfig, SynapseModels, SynapseSizing, apply_set,
                     default_models, solve_read_point)


@dataclass(frozen=True)
class DesignCase:
    id: int
    sizing: SynapseSizing


def _case(mn1_w, mp1_w, mn2_w, mn2_l):
    return SynapseSizing(mp1=MosfetGeometry(mp1_w, 0.5), mn1=MosfetGeometry(mn1_w, 0.5),
                         mn2=MosfetGeometry(mn2_w, mn2_l))


DESIGN_CASES = {
    1: DesignCase(1, _case(1.0, 0.5, 0.5, 0.5)),
    2: DesignCase(2, _case(1.0, 2.5, 0.5, 0.5)),
    3: DesignCase(3, _case(5.0, 0.5, 0.5, 0.5)),
    4: DesignCase(4, _case(5.0, 2.5, 0.5, 0.5)),
    5: DesignCase(5, _case(5.0, 2.5, 2.5, 0.5)),
    6: DesignCase(6, _case(5.0, 2.5, 0.5, 2.5)),
}


@dataclass(frozen=True)
class SetRow:
    v_gate: float
    compliance_current: float
    final_r: float
    power: float
    energy: float
    status: str = "ok"


def _check_range(v_gates, lo, hi, what):
    v = list(v_gates)
    if not v or min(v) < lo - 1e-12 or max(v) > hi + 1e-12:
        raise ValueError(f"{what} gate voltages must lie in [{lo}, {hi}] V")
    return v


def sweep_set(v_gates, sizing: SynapseSizing = SynapseSizing(),
              supplies: SupplyConfig = SupplyConfig(),
              models: SynapseModels | None = None) -> list[SetRow]:
    """SET from HRS at each gate voltage; failed points are annotated, not raised."""
    models = models or default_models()
    rows = []
    for v in _check_range(v_gates, 0.6, 1.3, "SET"):
        try:
            res = apply_set(MemristorState.hrs(models.memristor), sizing, supplies, v, models)
        except SynapseError as exc:
            nan = float("nan")
            rows.append(SetRow(v, nan, nan, nan, nan, f"error: {exc}"))
            continue
        power = supplies.vdd_set * res.compliance_current
        rows.append(SetRow(v, res.compliance_current, res.state.resistance, power,
                           power * supplies.energy_window))
    return rows


@dataclass(frozen=True)
class ReadRow:
    v_gate: float
    vrange: float
    i1_lo: float
    i1_hi: float
    i2_lo: float
    i2_hi: float
    status: str = "ok"


def read_window(v_gate: float, sizing: SynapseSizing = SynapseSizing(),
                supplies: SupplyConfig = SupplyConfig(), r_pair=(5e3, 20e3),
                models: SynapseModels | None = None) -> ReadRow:
    """Bottom-node swing between the two resistances of ``r_pair`` at one gate voltage."""
    lo = solve_read_point(sizing, supplies, r_pair[0], models, v_gate=v_gate)
    hi = solve_read_point(sizing, supplies, r_pair[1], models, v_gate=v_gate)
    return ReadRow(v_gate, abs(lo.v_mem_bot - hi.v_mem_bot), lo.i_stage1, hi.i_stage1,
                   lo.i_stage2, hi.i_stage2)


def sweep_read(v_gates, sizing: SynapseSizing = SynapseSizing(),
               supplies: SupplyConfig = SupplyConfig(), r_pair=(5e3, 20e3),
               models: SynapseModels | None = None) -> list[ReadRow]:
    rows = []
    for v in _check_range(v_gates, 0.5, 0.8, "READ"):
        try:
            rows.append(read_window(v, sizing, supplies, r_pair, models))
        except SynapseError as exc:
            nan = float("nan")
            rows.append(ReadRow(v, nan, nan, nan, nan, nan, f"error: {exc}"))
    return rows


@dataclass(frozen=True)
class ReadPower:
    avg_power: float
    avg_energy: float
    levels: tuple  # (resistance, i_stage1, i_stage2, power) per level


def read_power_energy(sizing: SynapseSizing = SynapseSizing(),
                      supplies: SupplyConfig = SupplyConfig(),
                      models: SynapseModels | None = None,
                      include_stage2: bool = True) -> ReadPower:
    """READ power averaged over the 16 integer-kOhm LRS levels."""
    levels = []
    for r in LEVELS_OHM:
        op = solve_read_point(sizing, supplies, r, models)
        i2 = op.i_stage2 if include_stage2 else 0.0
        levels.append((float(r), op.i_stage1, i2, supplies.vdd_read * (op.i_stage1 + i2)))
    avg = math.fsum(p for *_, p in levels) / len(levels)
    return ReadPower(avg, avg * supplies.energy_window, tuple(levels))


@dataclass(frozen=True)
class Level:
    resistance: float
    code: int
    i_stage2: float


@dataclass(frozen=True)
class ResolutionTable:
    levels: tuple

    def __post_init__(self):
        r = [lv.resistance for lv in self.levels]
        if any(b <= a for a, b in zip(r, r[1:])):
            raise ValueError("resistances must be strictly increasing")
        if [lv.code for lv in self.levels] != list(range(len(self.levels))):
            raise ValueError("codes must run 0..N-1 in level order")

    @property
    def currents(self) -> np.ndarray:
        return np.array([lv.i_stage2 for lv in self.levels])

    @classmethod
    def from_currents(cls, currents, resistances=LEVELS_OHM) -> "ResolutionTable":
        return cls(tuple(Level(float(r), k, float(i))
                         for k, (r, i) in enumerate(zip(resistances, currents))))


def resolution_table(case: DesignCase, supplies: SupplyConfig = SupplyConfig(),
                     models: SynapseModels | None = None) -> ResolutionTable:
    """Second-stage current of every 4-bit level (5 kOhm -> 0000 ... 20 kOhm -> 1111)."""
    models = models or default_models()
    currents = [solve_read_point(case.sizing, supplies, r, models).i_stage2 for r in LEVELS_OHM]
    return ResolutionTable.from_currents(currents)


@dataclass(frozen=True)
class ReadabilityReport:
    readable_flags: tuple
    readable_count: int
    readability_pct: float
    bit_precision: int


def readability(table: ResolutionTable, adc_resolution: float = ADC_RESOLUTION) -> ReadabilityReport:
    """Greedy chain: a level is readable if it sits at least one ADC step
    away from the last readable level; the first level is always readable."""
    flags = []
    last = None
    for lv in table.levels:
        ok = last is None or abs(lv.i_stage2 - last) >= adc_resolution
        if ok:
            last = lv.i_stage2
        flags.append(ok)
    count = sum(flags)
    bits = int(math.floor(math.log2(count))) if count else 0
    return ReadabilityReport(tuple(flags), count, 100.0 * count / len(flags), bits)


def evaluate_cases(supplies: SupplyConfig = SupplyConfig(), models: SynapseModels | None = None,
                   adc_resolution: float = ADC_RESOLUTION, cases=DESIGN_CASES):
    """Resolution table and readability report for each design case, keyed by case id."""
    out = {}
    for cid, case in cases.items():
        table = resolution_table(case, supplies, models)
        out[cid] = (table, readability(table, adc_resolution))
    return out
