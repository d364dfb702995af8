"""Independent reference computations shared by the test modules."""

import numpy as np

from memsynapse.devices import MosfetGeometry, drain_current
from memsynapse.solver import SynapseSizing


def scan_oracle(rail, mp1, r, mn1, v_gate, v_readb=0.0):
    """Brute-force bottom-node scan: 10 mV grid, then a 1 uV grid inside the sign change.

    For a trial bottom voltage the MN1 current fixes the top node; the
    residual is the MP1 current there minus the MN1 current.
    """
    def h(vb):
        i_n = drain_current(mn1.params, mn1.geom, v_gate, vb)
        vt = vb + i_n * r
        return drain_current(mp1.params, mp1.geom, v_readb - rail, vt - rail) - i_n

    coarse = np.linspace(0.0, rail, int(round(rail / 0.01)) + 1)
    hc = h(coarse)
    k = int(np.flatnonzero((hc[:-1] > 0) & (hc[1:] <= 0))[0])
    fine = coarse[k] + np.arange(0, 10001) * 1e-6
    fine = fine[fine <= coarse[k + 1] + 1e-12]
    hf = h(fine)
    j = int(np.flatnonzero((hf[:-1] > 0) & (hf[1:] <= 0))[0])
    # linear interpolation inside the 1 uV cell
    vb = fine[j] + 1e-6 * hf[j] / (hf[j] - hf[j + 1])
    i_n = float(drain_current(mn1.params, mn1.geom, v_gate, vb))
    return vb + i_n * r, vb, i_n


def random_operating_points(count, seed=1234):
    """(rail, sizing, resistance, gate voltage) tuples spanning both supplies."""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        rail = float(rng.choice([1.2, 3.3]))
        sizing = SynapseSizing(MosfetGeometry(float(rng.uniform(0.5, 5)), 0.5),
                               MosfetGeometry(float(rng.uniform(0.5, 5)), 0.5))
        r = float(np.exp(rng.uniform(np.log(1e3), np.log(100e3))))
        yield rail, sizing, r, float(rng.uniform(0.3, 1.3))
