"""Small spiking classifier: rate coding, discrete-time LIF, neuroevolution, weight quantization.

Networks are layered (inputs -> optional hidden layer -> outputs, plus direct
input -> output synapses) so a whole population can be simulated at once
during training. ``simulate`` itself accepts any topology, recurrent or not.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .errors import IngestionError

# --- data -------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    name: str
    features: np.ndarray = field(repr=False)  # (instances, features), in [0, 1]
    labels: np.ndarray = field(repr=False)
    train_idx: np.ndarray = field(repr=False)
    test_idx: np.ndarray = field(repr=False)
    feature_min: np.ndarray = field(repr=False)
    feature_max: np.ndarray = field(repr=False)
    classes: tuple = ()

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def split(self, which: str):
        idx = self.train_idx if which == "train" else self.test_idx
        return self.features[idx], self.labels[idx]


def bundled_dataset(name: str) -> str:
    """Path of a dataset shipped with the package ("wine" or "breast_cancer")."""
    return str(resources.files("memsynapse") / "data" / f"{name}.csv")


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_dataset(path, name: str | None = None, split_fraction: float = 0.7, seed: int = 0,
                 label_column: int = -1) -> Dataset:
    """Read a comma-separated table, split it (stratified) and min-max normalize.

    The normalization bounds come from the training rows only; test rows are
    clipped into [0, 1].
    """
    if not 0.0 < split_fraction <= 1.0:
        raise ValueError("split_fraction must be in (0, 1]")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    if not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]
    width = len(rows[0])
    feats, raw_labels = [], []
    for lineno, row in enumerate(rows, start=1):
        if len(row) != width:
            raise IngestionError(f"{path}: row {lineno} has {len(row)} fields, expected {width}")
        label = row[label_column].strip()
        if not label:
            raise IngestionError(f"{path}: row {lineno} is missing its label")
        rest = row[:label_column % width] + row[label_column % width + 1:]
        try:
            feats.append([float(c) for c in rest])
        except ValueError:
            raise IngestionError(f"{path}: row {lineno} has a non-numeric feature") from None
        raw_labels.append(label)
    classes = sorted(set(raw_labels), key=lambda s: (not _is_number(s), float(s) if _is_number(s) else 0, s))
    if len(classes) < 2:
        raise IngestionError(f"{path}: only one class present")
    lookup = {c: k for k, c in enumerate(classes)}
    x = np.array(feats, dtype=float)
    y = np.array([lookup[c] for c in raw_labels])

    rng = np.random.default_rng(seed)
    train, test = [], []
    for k in range(len(classes)):
        members = rng.permutation(np.flatnonzero(y == k))
        cut = int(round(split_fraction * members.size))
        train.extend(members[:cut])
        test.extend(members[cut:])
    train, test = np.sort(np.array(train, dtype=int)), np.sort(np.array(test, dtype=int))

    lo, hi = x[train].min(axis=0), x[train].max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    norm = np.clip((x - lo) / span, 0.0, 1.0)
    return Dataset(name or str(path), norm, y, train, test, lo, hi, tuple(classes))


# --- encoding ---------------------------------------------------------------

MAX_RATE = 0.2
SIM_WINDOW = 100


def encode(features, sim_window: int = SIM_WINDOW, max_rate: float = MAX_RATE) -> np.ndarray:
    """Rate-code one instance (or a batch) into boolean spike trains.

    Feature value f gives floor(f * window * max_rate) spikes spread evenly
    from t = 0. Output shape is (..., features, window).
    """
    f = np.asarray(features, dtype=float)
    counts = np.floor(f * sim_window * max_rate + 1e-9).astype(int)
    counts = np.clip(counts, 0, sim_window)
    trains = np.zeros(f.shape + (sim_window,), dtype=bool)
    for pos in np.ndindex(f.shape):
        c = counts[pos]
        if c:
            trains[pos][(np.arange(c) * sim_window) // c] = True
    return trains


# --- network ----------------------------------------------------------------


@dataclass(frozen=True)
class SpikingNetwork:
    thresholds: np.ndarray
    leaks: np.ndarray
    pre: np.ndarray
    post: np.ndarray
    weights: np.ndarray
    delays: np.ndarray
    inputs: tuple
    outputs: tuple
    w_min: float = -1.0
    w_max: float = 1.0

    def __post_init__(self):
        for name in ("thresholds", "leaks", "weights"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        for name in ("pre", "post", "delays"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=int))
        n = self.thresholds.size
        if self.leaks.size != n:
            raise ValueError("one leak per neuron required")
        if np.any(self.thresholds <= 0) or np.any((self.leaks < 0) | (self.leaks > 1)):
            raise ValueError("thresholds must be > 0 and leaks in [0, 1]")
        if not self.pre.size == self.post.size == self.weights.size == self.delays.size:
            raise ValueError("synapse arrays differ in length")
        if self.pre.size and (self.pre.min() < 0 or self.post.min() < 0
                              or max(self.pre.max(), self.post.max()) >= n):
            raise ValueError("synapse endpoint out of range")
        if np.any(self.pre == self.post):
            raise ValueError("self-loop synapse")
        if np.any(self.delays < 1):
            raise ValueError("delays must be >= 1 timestep")
        if np.any(self.weights < self.w_min - 1e-12) or np.any(self.weights > self.w_max + 1e-12):
            raise ValueError("weight outside [w_min, w_max]")
        reach = self._reachable()
        missing = [o for o in self.outputs if o not in reach]
        if missing:
            raise ValueError(f"outputs {missing} unreachable from any input")

    @property
    def n_neurons(self) -> int:
        return self.thresholds.size

    def _reachable(self) -> set:
        adj = {}
        for a, b in zip(self.pre.tolist(), self.post.tolist()):
            adj.setdefault(a, []).append(b)
        seen, queue = set(), deque(self.inputs)
        while queue:
            u = queue.popleft()
            for v in adj.get(u, ()):
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return seen

    def with_weights(self, weights) -> "SpikingNetwork":
        return replace(self, weights=np.asarray(weights, dtype=float))


def simulate(net: SpikingNetwork, spikes, sim_window: int | None = None,
             trace: list | None = None) -> np.ndarray:
    """Run the network on input spike trains and count output spikes.

    ``spikes`` is (inputs, window) or a batch (instances, inputs, window).
    Each step: v <- v*(1 - leak) + weights of spikes arriving now; a neuron
    at or above threshold fires and resets to 0. A spike sent at t arrives at
    t + delay. Input neurons fire exactly when their train says so. When
    ``trace`` is a list, the membrane potentials after each step are appended.
    """
    s = np.asarray(spikes, dtype=bool)
    single = s.ndim == 2
    if single:
        s = s[None]
    batch, n_in, window = s.shape
    if sim_window is not None:
        window = min(window, sim_window)
    if n_in != len(net.inputs):
        raise ValueError("spike trains do not match the input neurons")
    n = net.n_neurons
    max_d = int(net.delays.max()) if net.delays.size else 1
    mats = np.zeros((max_d + 1, n, n))
    np.add.at(mats, (net.delays, net.pre, net.post), net.weights)
    inputs = np.array(net.inputs, dtype=int)
    driven = np.zeros(n, dtype=bool)
    driven[inputs] = True
    keep = 1.0 - net.leaks
    v = np.zeros((batch, n))
    history = np.zeros((max_d + 1, batch, n))  # ring buffer of emitted spikes
    counts = np.zeros((batch, n))
    for t in range(window):
        arriving = np.zeros((batch, n))
        for d in range(1, max_d + 1):
            arriving += history[(t - d) % (max_d + 1)] @ mats[d]
        v = v * keep + arriving
        fired = (v >= net.thresholds) & ~driven
        fired[:, inputs] = s[:, :, t]
        v = np.where(fired | driven, 0.0, v)
        history[t % (max_d + 1)] = fired
        counts += fired
        if trace is not None:
            trace.append(v.copy())
    out = counts[:, list(net.outputs)]
    return out[0] if single else out


def classify(counts) -> np.ndarray:
    """Index of the busiest output neuron; ties go to the lowest index."""
    return np.argmax(np.asarray(counts), axis=-1)


def accuracy(net: SpikingNetwork, dataset: Dataset, which: str = "test",
             sim_window: int = SIM_WINDOW, max_rate: float = MAX_RATE) -> float:
    x, y = dataset.split(which)
    if y.size == 0:
        return float("nan")
    pred = classify(simulate(net, encode(x, sim_window, max_rate), sim_window))
    return float(np.mean(pred == y))


# --- quantization -----------------------------------------------------------


@dataclass(frozen=True)
class QuantizationScheme:
    levels: int
    w_min: float = -1.0
    w_max: float = 1.0

    def __post_init__(self):
        if not 2 <= self.levels <= 16:
            raise ValueError("level count must be in [2, 16]")
        if not self.w_min < self.w_max:
            raise ValueError("w_min must be below w_max")

    @property
    def step(self) -> float:
        return (self.w_max - self.w_min) / (self.levels - 1)


def level_index(weights, scheme: QuantizationScheme) -> np.ndarray:
    """Nearest level index (half rounds up) on the scheme's uniform grid."""
    w = np.asarray(weights, dtype=float)
    x = (w - scheme.w_min) / (scheme.w_max - scheme.w_min) * (scheme.levels - 1)
    return np.clip(np.floor(x + 0.5), 0, scheme.levels - 1).astype(int)


def quantize(net: SpikingNetwork, scheme: QuantizationScheme) -> SpikingNetwork:
    """Snap every weight to the nearest of ``scheme.levels`` evenly spaced values."""
    q = level_index(net.weights, scheme)
    return net.with_weights(scheme.w_min + q * scheme.step)


def collapse_weights(net: SpikingNetwork, value: float | None = None) -> SpikingNetwork:
    """Single-level synapse: every weight takes the same value (w_max by default)."""
    return net.with_weights(np.full(net.weights.shape, net.w_max if value is None else value))


# --- evolution --------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    population: int = 64
    generations: int = 200
    mutation_rate: float = 0.1
    seed: int = 0
    sim_window: int = SIM_WINDOW
    max_rate: float = MAX_RATE
    hidden: int = 0
    max_delay: int = 2
    w_min: float = -1.0
    w_max: float = 1.0

    def __post_init__(self):
        if self.population < 4:
            raise ValueError("population must be >= 4")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if not 0 <= self.mutation_rate <= 1:
            raise ValueError("mutation_rate must be in [0, 1]")
        if self.max_delay < 1 or self.hidden < 0:
            raise ValueError("max_delay must be >= 1 and hidden >= 0")


THRESHOLD_RANGE = (0.25, 8.0)
LEAK_RANGE = (0.0, 0.5)
# Connection groups of the layered genome: (source layer, target layer).
_GROUPS = (("in", "hid"), ("in", "out"), ("hid", "out"))


@dataclass
class Genome:
    """Dense parameter block of one layered network."""

    w: dict
    mask: dict
    delay: dict
    threshold: np.ndarray  # hidden then output neurons
    leak: np.ndarray

    def copy(self) -> "Genome":
        return Genome({k: v.copy() for k, v in self.w.items()},
                      {k: v.copy() for k, v in self.mask.items()},
                      {k: v.copy() for k, v in self.delay.items()},
                      self.threshold.copy(), self.leak.copy())


def _layer_sizes(n_in, cfg: TrainConfig, n_out):
    return {"in": n_in, "hid": cfg.hidden, "out": n_out}


def _random_genome(rng, sizes, cfg: TrainConfig) -> Genome:
    w, mask, delay = {}, {}, {}
    for src, dst in _GROUPS:
        shape = (sizes[src], sizes[dst])
        w[src, dst] = rng.uniform(cfg.w_min, cfg.w_max, shape)
        mask[src, dst] = rng.random(shape) < 0.5
        delay[src, dst] = rng.integers(1, cfg.max_delay + 1, shape)
    n = sizes["hid"] + sizes["out"]
    g = Genome(w, mask, delay, rng.uniform(0.5, 4.0, n), rng.uniform(*LEAK_RANGE, n))
    _repair(g, rng, sizes)
    return g


def _repair(g: Genome, rng, sizes):
    """Guarantee every output neuron receives at least one input synapse."""
    m = g.mask["in", "out"]
    for o in np.flatnonzero(~m.any(axis=0)):
        m[rng.integers(sizes["in"]), o] = True


def _mutate(parent: Genome, rng, sizes, cfg: TrainConfig) -> Genome:
    g = parent.copy()
    rate = cfg.mutation_rate
    span = cfg.w_max - cfg.w_min
    for key in g.w:
        shape = g.w[key].shape
        hit = rng.random(shape) < rate
        g.w[key] = np.clip(g.w[key] + hit * rng.normal(0.0, 0.2 * span, shape), cfg.w_min, cfg.w_max)
        g.mask[key] ^= rng.random(shape) < rate / 4
        redelay = rng.random(shape) < rate / 4
        g.delay[key] = np.where(redelay, rng.integers(1, cfg.max_delay + 1, shape), g.delay[key])
    n = g.threshold.size
    hit = rng.random(n) < rate
    g.threshold = np.clip(g.threshold * np.exp(hit * rng.normal(0.0, 0.25, n)), *THRESHOLD_RANGE)
    hit = rng.random(n) < rate
    g.leak = np.clip(g.leak + hit * rng.normal(0.0, 0.05, n), *LEAK_RANGE)
    _repair(g, rng, sizes)
    return g


def genome_to_network(g: Genome, sizes, cfg: TrainConfig) -> SpikingNetwork:
    """Materialize the synapse list; disabled slots and hidden neurons stay in the neuron table."""
    offset = {"in": 0, "hid": sizes["in"], "out": sizes["in"] + sizes["hid"]}
    n = sizes["in"] + sizes["hid"] + sizes["out"]
    thresholds = np.concatenate([np.ones(sizes["in"]), g.threshold])
    leaks = np.concatenate([np.zeros(sizes["in"]), g.leak])
    pre, post, weight, delay = [], [], [], []
    for key in _GROUPS:
        src, dst = np.nonzero(g.mask[key])
        pre.append(src + offset[key[0]])
        post.append(dst + offset[key[1]])
        weight.append(g.w[key][src, dst])
        delay.append(g.delay[key][src, dst])
    return SpikingNetwork(thresholds, leaks, np.concatenate(pre), np.concatenate(post),
                          np.concatenate(weight), np.concatenate(delay),
                          tuple(range(sizes["in"])), tuple(range(offset["out"], n)),
                          cfg.w_min, cfg.w_max)


def _delay_stack(trains, max_delay):
    """Time-major trains (T, B, J) shifted by 1..max_delay steps, laid out as (T, B, max_delay*J)."""
    t, b, j = trains.shape
    out = np.zeros((t, b, max_delay, j))
    for d in range(1, max_delay + 1):
        out[d:, :, d - 1] = trains[:-d]
    return out.reshape(t, b, max_delay * j)


def _integrate(current, threshold, keep):
    """LIF over time for drive (T, B, P, N); returns spike trains of the same shape."""
    v = np.zeros(current.shape[1:])
    fired = np.empty(current.shape, dtype=bool)
    for t in range(current.shape[0]):
        v *= keep
        v += current[t]
        f = np.greater_equal(v, threshold, out=fired[t])
        v[f] = 0.0
    return fired


def _drive(stack, genomes, key, max_delay):
    """Synaptic drive (T, B, P, dst) of delay-stacked source trains through one connection group."""
    d = np.arange(1, max_delay + 1)[:, None, None]
    w = np.stack([(g.w[key] * g.mask[key])[None] * (g.delay[key][None] == d) for g in genomes],
                 axis=-2)  # (D, src, P, dst)
    t, b, _ = stack.shape
    flat = w.reshape(-1, w.shape[-2] * w.shape[-1])
    return (stack.reshape(t * b, -1) @ flat).reshape(t, b, len(genomes), -1)


def population_counts(genomes, trains, cfg: TrainConfig, sizes, stack=None) -> np.ndarray:
    """Output spike counts (P, B, outputs) for a layered population on (B, inputs, T) trains."""
    if stack is None:
        stack = _delay_stack(np.moveaxis(trains, -1, 0).astype(float), cfg.max_delay)
    n_hid = sizes["hid"]
    thr = np.stack([g.threshold for g in genomes])
    keep = 1.0 - np.stack([g.leak for g in genomes])
    drive_out = _drive(stack, genomes, ("in", "out"), cfg.max_delay)
    if n_hid:
        hid = _integrate(_drive(stack, genomes, ("in", "hid"), cfg.max_delay),
                         thr[:, :n_hid], keep[:, :n_hid])
        t, b, p, _ = hid.shape
        hid_stack = _delay_stack(hid.reshape(t, b * p, n_hid).astype(float), cfg.max_delay)
        # hidden trains feed only their own network: take the block diagonal over P
        d = np.arange(1, cfg.max_delay + 1)[:, None, None]
        w = np.stack([(g.w["hid", "out"] * g.mask["hid", "out"])[None]
                      * (g.delay["hid", "out"][None] == d) for g in genomes])  # (P, D, H, O)
        hs = hid_stack.reshape(t, b, p, cfg.max_delay * n_hid)
        drive_out += np.einsum("tbpk,pko->tbpo", hs, w.reshape(p, -1, w.shape[-1]), optimize=True)
    out = _integrate(drive_out, thr[:, n_hid:], keep[:, n_hid:])
    return np.moveaxis(out.sum(axis=0), 1, 0)


def _fitness(counts, labels):
    """Accuracy, with mean normalized winning margin as a tie-breaker."""
    pred = classify(counts)
    acc = np.mean(pred == labels[None, :], axis=1)
    rows = np.arange(labels.size)
    correct = counts[:, rows, labels]
    others = counts.astype(float)
    others[:, rows, labels] = -np.inf
    margin = np.mean(np.tanh((correct - others.max(axis=2)) / 4.0), axis=1)
    return acc, margin


def evolve(dataset: Dataset, config: TrainConfig = TrainConfig(), history: list | None = None,
           return_genome: bool = False):
    """Neuroevolution of a layered LIF classifier on the training split.

    Each generation ranks the population by training accuracy (mean winning
    margin breaks ties), keeps the top quarter and refills the rest with
    mutated copies of the survivors. Every random draw comes from a stream
    keyed by (seed, generation, slot). ``history`` receives the best-so-far
    training accuracy after each generation.
    """
    cfg = config
    x, y = dataset.split("train")
    trains = encode(x, cfg.sim_window, cfg.max_rate)
    stack = _delay_stack(np.moveaxis(trains, -1, 0).astype(float), cfg.max_delay)
    sizes = _layer_sizes(dataset.n_features, cfg, dataset.n_classes)
    pop = [_random_genome(np.random.default_rng([cfg.seed, 0, s]), sizes, cfg)
           for s in range(cfg.population)]
    keep = max(1, cfg.population // 4)
    best, best_key = None, None
    for gen in range(cfg.generations):
        acc, margin = _fitness(population_counts(pop, trains, cfg, sizes, stack), y)
        order = sorted(range(len(pop)), key=lambda i: (-acc[i], -margin[i], i))
        top = order[0]
        key = (acc[top], margin[top])
        if best_key is None or key > best_key:
            best, best_key = pop[top].copy(), key
        if history is not None:
            history.append(float(best_key[0]))
        if gen == cfg.generations - 1:
            break
        elites = [pop[i] for i in order[:keep]]
        children = []
        for slot in range(keep, cfg.population):
            rng = np.random.default_rng([cfg.seed, gen + 1, slot])
            children.append(_mutate(elites[(slot - keep) % keep], rng, sizes, cfg))
        pop = elites + children
    net = genome_to_network(best, sizes, cfg)
    return (net, best) if return_genome else net


# --- case study -------------------------------------------------------------


@dataclass(frozen=True)
class CaseRow:
    case: str
    levels: int | None
    train_acc: float
    test_acc: float


def case_study(net: SpikingNetwork, dataset: Dataset, levels_by_case: dict,
               sim_window: int = SIM_WINDOW, max_rate: float = MAX_RATE) -> list[CaseRow]:
    """Accuracy of the full-precision network and of each per-case quantized copy.

    ``levels_by_case`` maps a case label to its count of readable synapse
    levels; counts above 16 are capped and a count of 1 collapses every
    weight to a single value.
    """
    def score(n):
        return (accuracy(n, dataset, "train", sim_window, max_rate),
                accuracy(n, dataset, "test", sim_window, max_rate))

    rows = [CaseRow("full", None, *score(net))]
    for case, levels in levels_by_case.items():
        levels = min(int(levels), 16)
        if levels < 2:
            variant = collapse_weights(net)
        else:
            variant = quantize(net, QuantizationScheme(levels, net.w_min, net.w_max))
        rows.append(CaseRow(str(case), levels, *score(variant)))
    return rows
