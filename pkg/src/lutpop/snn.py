"""Izhikevich network with binary connectivity and approximate spike counting.

The network is split into an excitatory and an inhibitory population with
independent binary connection matrices.  Each step, every neuron's received
spike count per population is the Hamming weight of (connection row AND
spike vector); that count is taken either exactly or through a compressor
tree, so an undercount acts like a synaptic transmission failure.  A linear
readout trained online by recursive least squares (with its output fed back
through a fixed random encoder) learns a target waveform; the readout path
itself stays real-valued and exact.

Time is in milliseconds, currents in the same arbitrary units as the bias,
voltages in mV.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources

import numpy as np
from scipy.linalg import blas as _blas

from .bitvec import BitVector, RngStream
from .compressor import CompressorConfig, approx_weight, batch_totals, preset

__all__ = [
    "NeuronParams",
    "NetworkConfig",
    "LearningParams",
    "PhaseSchedule",
    "SnnConfig",
    "SnnResult",
    "FailureStats",
    "ChaosReport",
    "SimulationDivergedError",
    "SpikeAbsentError",
    "load_params",
    "default_params",
    "build_network",
    "accumulate_presynaptic",
    "rls_update",
    "Simulation",
    "run_experiment",
    "chaos_experiment",
    "replay_failure",
    "population_activity",
]

# substream ids for the independent random draws of one experiment
_STREAM_EXC = 1
_STREAM_INH = 2
_STREAM_VINIT = 3
_STREAM_ENCODER = 4


class SimulationDivergedError(RuntimeError):
    """Membrane state or RLS state stopped being finite."""


class SpikeAbsentError(ValueError):
    """The designated spike does not occur in the baseline run."""


@dataclass(frozen=True)
class NeuronParams:
    capacitance: float = 250.0
    gain: float = 2.5                 # quadratic voltage gain
    v_rest: float = -60.0
    v_thresh: float = -19.2
    v_peak: float = 30.0
    v_reset: float = -65.0
    adapt_rate: float = 0.01          # 1/ms
    adapt_coupling: float = -2.0
    adapt_jump: float = 200.0
    bias_current: float = 1000.0
    tau_syn_ms: float = 20.0
    dt_ms: float = 0.04

    def validate(self) -> None:
        if not (self.v_reset < self.v_rest < self.v_thresh < self.v_peak):
            raise ValueError(
                "need v_reset < v_rest < v_thresh < v_peak, got "
                f"{self.v_reset}, {self.v_rest}, {self.v_thresh}, {self.v_peak}"
            )
        if self.dt_ms <= 0 or self.tau_syn_ms <= 0:
            raise ValueError("dt_ms and tau_syn_ms must be positive")


@dataclass(frozen=True)
class NetworkConfig:
    """Sizes, magnitudes and the compressor used for presynaptic counting.

    ``density_per_type`` is measured over the full n x n matrix; each
    presynaptic neuron is exclusively excitatory or inhibitory, so within
    its own columns the wiring probability is density / fraction.  The
    random feedback encoder is drawn from the seed; the decoder starts at
    zero and is learned.
    """

    n: int = 1024
    frac_excitatory: float = 0.5
    density_per_type: float = 0.05
    w_exc: float = 1.0
    w_inh: float = 1.0
    gain_static: float = 80.0
    gain_feedback: float = 2500.0
    readout_dim: int = 1
    compressor: CompressorConfig = field(default_factory=lambda: preset("EXACT"))
    seed: int = 0

    @property
    def n_exc(self) -> int:
        return round(self.n * self.frac_excitatory)

    def validate(self) -> None:
        if self.n < 2 or self.n % 2:
            raise ValueError("neuron count must be even and >= 2")
        if not 0 <= self.density_per_type < 1:
            raise ValueError("density must be in [0, 1)")
        if self.readout_dim != 1:
            raise ValueError("only a scalar readout is supported")


@dataclass(frozen=True)
class LearningParams:
    rls_regularizer: float = 2.0      # initial P = regularizer * I
    rls_interval_steps: int = 1
    target_hz: float = 5.0
    target_amplitude: float = 1.0


@dataclass(frozen=True)
class PhaseSchedule:
    """Free-running, training, and generation intervals, in seconds.

    Training and generation may be zero for dynamics-only runs (the chaos
    probe uses init only); the default 2 + 2 + 1 covers the full protocol.
    """

    init_s: float = 2.0
    train_s: float = 2.0
    generate_s: float = 1.0

    def validate(self) -> None:
        if self.init_s <= 0 or self.train_s < 0 or self.generate_s < 0:
            raise ValueError("init must be positive; train/generate non-negative")

    @property
    def total_s(self) -> float:
        return self.init_s + self.train_s + self.generate_s

    def steps(self, dt_ms: float) -> tuple[int, int, int]:
        return (
            round(self.init_s * 1000.0 / dt_ms),
            round(self.train_s * 1000.0 / dt_ms),
            round(self.generate_s * 1000.0 / dt_ms),
        )


@dataclass(frozen=True)
class SnnConfig:
    neuron: NeuronParams = field(default_factory=NeuronParams)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    learning: LearningParams = field(default_factory=LearningParams)
    schedule: PhaseSchedule = field(default_factory=PhaseSchedule)

    def validate(self) -> None:
        self.neuron.validate()
        self.network.validate()
        self.schedule.validate()

    def with_compressor(self, compressor: CompressorConfig) -> "SnnConfig":
        return replace(self, network=replace(self.network, compressor=compressor))

    def with_seed(self, seed: int) -> "SnnConfig":
        return replace(self, network=replace(self.network, seed=seed))

    def to_dict(self) -> dict:
        d = {
            "neuron": asdict(self.neuron),
            "network": asdict(self.network),
            "learning": asdict(self.learning),
            "schedule": asdict(self.schedule),
        }
        d["network"]["compressor"] = self.network.compressor.name
        return d


_REQUIRED_KEYS = {
    "neuron": list(NeuronParams.__dataclass_fields__),
    "network": [k for k in NetworkConfig.__dataclass_fields__],
    "learning": list(LearningParams.__dataclass_fields__),
    "schedule": list(PhaseSchedule.__dataclass_fields__),
}


def params_from_dict(raw: dict) -> SnnConfig:
    """Build a config from parsed JSON, naming every missing key."""
    missing = []
    for section, keys in _REQUIRED_KEYS.items():
        if section not in raw:
            missing.extend(f"{section}.{k}" for k in keys)
            continue
        for k in keys:
            if k not in raw[section]:
                missing.append(f"{section}.{k}")
    if missing:
        raise ValueError("missing config keys: " + ", ".join(sorted(missing)))
    net = dict(raw["network"])
    net["compressor"] = preset(str(net["compressor"]))
    cfg = SnnConfig(
        neuron=NeuronParams(**raw["neuron"]),
        network=NetworkConfig(**net),
        learning=LearningParams(**raw["learning"]),
        schedule=PhaseSchedule(**raw["schedule"]),
    )
    cfg.validate()
    return cfg


def load_params(path: str) -> SnnConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return params_from_dict(json.load(fh))


def default_params() -> SnnConfig:
    """The shipped parameter file (data/snn_defaults.json)."""
    text = resources.files("lutpop").joinpath("data/snn_defaults.json").read_text()
    return params_from_dict(json.loads(text))


def _connectivity(cfg: NetworkConfig) -> tuple[np.ndarray, np.ndarray]:
    """Binary (n, n) masks for the two populations, drawn from the seed."""
    n, ne = cfg.n, cfg.n_exc
    p_within = cfg.density_per_type / cfg.frac_excitatory
    root = RngStream(cfg.seed)
    exc = np.zeros((n, n), dtype=bool)
    inh = np.zeros((n, n), dtype=bool)
    exc[:, :ne] = root.substream(_STREAM_EXC).generator.random((n, ne)) < p_within
    inh[:, ne:] = root.substream(_STREAM_INH).generator.random((n, n - ne)) < p_within
    return exc, inh


def build_network(cfg: NetworkConfig) -> tuple[list[BitVector], list[BitVector]]:
    """Presynaptic connection vectors, one BitVector row per neuron and type."""
    exc, inh = _connectivity(cfg)
    return (
        [BitVector.from_array(row) for row in exc],
        [BitVector.from_array(row) for row in inh],
    )


def accumulate_presynaptic(
    compressor: CompressorConfig, cv: BitVector, sv: BitVector
) -> tuple[int, int]:
    """(approximate, exact) count of presynaptic spikes actually received."""
    rv = cv & sv
    return approx_weight(compressor, rv), rv.weight()


def rls_update(
    P: np.ndarray, phi: np.ndarray, r: np.ndarray, err: float
) -> tuple[np.ndarray, np.ndarray]:
    """One recursive-least-squares step on the readout decoder.

    P' = P - (P r r^T P) / (1 + r^T P r);  phi' = phi - err * P' r.
    The rank-1 form keeps P exactly symmetric in floating point.
    """
    c = P @ r
    denom = 1.0 + float(r @ c)
    if not np.isfinite(denom) or denom <= 0:
        raise SimulationDivergedError("RLS correlation state is not finite")
    P = P - np.outer(c, c) / denom
    phi = phi - err * (c / denom)
    return P, phi


@dataclass
class FailureStats:
    """Undercount statistics over (neuron, step) pairs with exact count >= 1."""

    max_pct: float
    mean_pct: float
    pairs: int

    @classmethod
    def empty(cls) -> "FailureStats":
        return cls(0.0, 0.0, 0)


class _FailureTally:
    def __init__(self) -> None:
        self.max_pct = 0.0
        self.sum_pct = 0.0
        self.pairs = 0

    def add(self, exact: np.ndarray, approx: np.ndarray) -> None:
        mask = exact >= 1
        if not mask.any():
            return
        pct = 100.0 * (exact[mask] - approx[mask]) / exact[mask]
        self.pairs += int(mask.sum())
        self.sum_pct += float(pct.sum())
        self.max_pct = max(self.max_pct, float(pct.max()))

    def result(self) -> FailureStats:
        mean = self.sum_pct / self.pairs if self.pairs else 0.0
        return FailureStats(self.max_pct, mean, self.pairs)


class _TypeAccumulator:
    """Event-driven presynaptic counting for one population's matrix.

    Holds the adjacency of the binary matrix in compressed-column form plus
    each presynaptic index's level-1 LUT slot, so a step with k spikes costs
    O(k * fan_out) scatter work instead of touching the whole matrix.
    """

    def __init__(self, mask: np.ndarray, compressor: CompressorConfig):
        n = mask.shape[0]
        self.n = n
        self.compressor = compressor
        self.posts = [np.flatnonzero(mask[:, j]).astype(np.int32) for j in range(n)]
        if compressor.is_exact:
            self.luts_per_block = 1
            self.n_blocks = n
            self.lut_col = np.arange(n, dtype=np.int32)
        else:
            plan = compressor.plan
            self.luts_per_block = plan.n_level1
            self.n_blocks = -(-n // compressor.block_width)
            pos = np.arange(n)
            blk, off = np.divmod(pos, compressor.block_width)
            self.lut_col = (blk * self.luts_per_block + off // plan.fan1).astype(
                np.int32
            )
        self.buf = np.zeros((n, self.n_blocks * self.luts_per_block), dtype=np.uint8)

    def counts(self, spiking: np.ndarray):
        """Returns (active neuron ids, exact counts, approx counts) or None."""
        if spiking.size == 0:
            return None
        buf = self.buf
        buf.fill(0)
        chunks = []
        for j in spiking:
            p = self.posts[j]
            if p.size:
                buf[p, self.lut_col[j]] += 1
                chunks.append(p)
        if not chunks:
            return None
        active = np.unique(np.concatenate(chunks))
        sub = buf[active]
        exact = sub.sum(axis=1, dtype=np.int64)
        if self.compressor.is_exact:
            return active, exact, exact
        m = active.size
        totals = batch_totals(
            self.compressor, sub.reshape(m * self.n_blocks, self.luts_per_block)
        ).reshape(m, self.n_blocks).sum(axis=1)
        return active, exact, totals


@dataclass
class SnnResult:
    """Everything one run produces: traces, spike records, and metrics."""

    n: int
    dt_ms: float
    seed: int
    compressor: str
    schedule: PhaseSchedule
    spike_steps: np.ndarray
    spike_neurons: np.ndarray
    v0_trace: np.ndarray
    pop_counts: np.ndarray
    readout: np.ndarray
    target: np.ndarray
    mfr_hz: float
    mse_generate: float
    failure: FailureStats

    @property
    def n_steps(self) -> int:
        return self.v0_trace.size

    def times_ms(self) -> np.ndarray:
        return (np.arange(self.n_steps) + 1) * self.dt_ms

    def population_rate(self, window_ms: float = 8.0) -> np.ndarray:
        return population_activity(self.pop_counts, self.n, self.dt_ms, window_ms)

    def generate_slice(self) -> slice:
        i, t, _ = self.schedule.steps(self.dt_ms)
        return slice(i + t, self.n_steps)


class Simulation:
    """A configured network ready to be stepped; see ``run`` for the loop."""

    def __init__(self, cfg: SnnConfig):
        cfg.validate()
        self.cfg = cfg
        p, net = cfg.neuron, cfg.network
        self.exc_mask, self.inh_mask = _connectivity(net)
        self.acc_exc = _TypeAccumulator(self.exc_mask, net.compressor)
        self.acc_inh = _TypeAccumulator(self.inh_mask, net.compressor)
        root = RngStream(net.seed)
        self.eta = root.substream(_STREAM_ENCODER).generator.uniform(
            -1.0, 1.0, net.n
        )
        self.v_init = p.v_rest + (
            p.v_peak - p.v_rest
        ) * root.substream(_STREAM_VINIT).generator.random(net.n)
        self.decay = float(np.exp(-p.dt_ms / p.tau_syn_ms))

    def run(
        self,
        suppress: tuple[int, int] | None = None,
        record_neuron: int = 0,
    ) -> SnnResult:
        """Run init, train, generate; optionally suppress one spike's delivery.

        ``suppress=(neuron, step)`` clears that neuron's spike-vector bit at
        exactly that step; the neuron still resets, and the spike stays in
        the records, so only its downstream effect is removed.
        """
        cfg = self.cfg
        p, net, lrn = cfg.neuron, cfg.network, cfg.learning
        n = net.n
        n_init, n_train, n_gen = cfg.schedule.steps(p.dt_ms)
        n_total = n_init + n_train + n_gen

        dt, cap = p.dt_ms, p.capacitance
        v = self.v_init.copy()
        u = np.zeros(n)
        s = np.zeros(n)
        r = np.zeros(n)
        sv = np.array([], dtype=np.int64)      # spiking neuron ids, last step
        phi = np.zeros(n)
        P32 = None
        jump_r = 1.0 / p.tau_syn_ms

        t_ms = (np.arange(n_total, dtype=np.float64) + 1.0) * dt
        target = lrn.target_amplitude * np.sin(
            2.0 * np.pi * lrn.target_hz * t_ms / 1000.0
        )

        v0_trace = np.empty(n_total)
        pop_counts = np.zeros(n_total, dtype=np.int32)
        readout = np.empty(n_total)
        spike_steps: list[np.ndarray] = []
        spike_neurons: list[np.ndarray] = []
        tally = _FailureTally()
        ap_e = np.zeros(n)
        ap_i = np.zeros(n)
        ex_tot = np.zeros(n)
        ap_tot = np.zeros(n)

        for t in range(n_total):
            sv_exc = sv[sv < net.n_exc]
            sv_inh = sv[sv >= net.n_exc]
            got_e = self.acc_exc.counts(sv_exc)
            got_i = self.acc_inh.counts(sv_inh)

            s *= self.decay
            if got_e is not None or got_i is not None:
                ex_tot.fill(0.0)
                ap_tot.fill(0.0)
                if got_e is not None:
                    act, ex, ap = got_e
                    ap_e.fill(0.0)
                    ap_e[act] = ap
                    ex_tot[act] += ex
                    ap_tot[act] += ap
                    s += net.gain_static * net.w_exc * ap_e
                if got_i is not None:
                    act, ex, ap = got_i
                    ap_i.fill(0.0)
                    ap_i[act] = ap
                    ex_tot[act] += ex
                    ap_tot[act] += ap
                    s -= net.gain_static * net.w_inh * ap_i
                tally.add(ex_tot, ap_tot)

            r *= self.decay
            if sv.size:
                r[sv] += jump_r

            zhat = float(phi @ r)
            current = p.bias_current + s + net.gain_feedback * self.eta * zhat

            v_prev = v
            v = v + dt * (
                p.gain * (v - p.v_rest) * (v - p.v_thresh) - u + current
            ) / cap
            u = u + dt * p.adapt_rate * (
                p.adapt_coupling * (v_prev - p.v_rest) - u
            )

            fired = np.flatnonzero(v >= p.v_peak)
            v0_trace[t] = v[record_neuron]
            if not np.isfinite(v0_trace[t]):
                raise SimulationDivergedError(f"membrane voltage diverged at step {t}")
            if fired.size:
                v[fired] = p.v_reset
                u[fired] += p.adapt_jump
                spike_steps.append(np.full(fired.size, t, dtype=np.int64))
                spike_neurons.append(fired.astype(np.int64))
                pop_counts[t] = fired.size

            readout[t] = zhat
            in_train = n_init <= t < n_init + n_train
            if in_train and (t - n_init) % lrn.rls_interval_steps == 0:
                if P32 is None:
                    P32 = np.asfortranarray(
                        np.eye(n, dtype=np.float32) * lrn.rls_regularizer
                    )
                r32 = r.astype(np.float32)
                c = _blas.ssymv(1.0, P32, r32, lower=0)
                denom = 1.0 + float(r32 @ c)
                if not np.isfinite(denom) or denom <= 0:
                    raise SimulationDivergedError(
                        f"RLS correlation state diverged at step {t}"
                    )
                P32 = _blas.ssyr(-1.0 / denom, c, a=P32, lower=0, overwrite_a=1)
                phi -= (zhat - target[t]) * (c.astype(np.float64) / denom)

            if suppress is not None and t == suppress[1]:
                fired = fired[fired != suppress[0]]
            sv = fired

        total_spikes = int(pop_counts.sum())
        mfr = total_spikes / (n * cfg.schedule.total_s)
        if n_gen:
            gen = slice(n_init + n_train, n_total)
            mse = float(np.mean((readout[gen] - target[gen]) ** 2))
        else:
            mse = float("nan")
        return SnnResult(
            n=n,
            dt_ms=dt,
            seed=net.seed,
            compressor=net.compressor.name,
            schedule=cfg.schedule,
            spike_steps=(
                np.concatenate(spike_steps) if spike_steps else np.empty(0, np.int64)
            ),
            spike_neurons=(
                np.concatenate(spike_neurons) if spike_neurons else np.empty(0, np.int64)
            ),
            v0_trace=v0_trace,
            pop_counts=pop_counts,
            readout=readout,
            target=target,
            mfr_hz=mfr,
            mse_generate=mse,
            failure=tally.result(),
        )


def run_experiment(cfg: SnnConfig, record_neuron: int = 0) -> SnnResult:
    """One full init / train / generate run."""
    return Simulation(cfg).run(record_neuron=record_neuron)


@dataclass
class ChaosReport:
    """Baseline vs single-spike-deleted traces and their divergence."""

    baseline: SnnResult
    perturbed: SnnResult
    neuron: int
    deletion_step: int
    first_divergence_step: int | None

    def v0_divergence(self) -> np.ndarray:
        return np.abs(self.baseline.v0_trace - self.perturbed.v0_trace)

    def activity_divergence(self, window_ms: float = 8.0) -> np.ndarray:
        return np.abs(
            self.baseline.population_rate(window_ms)
            - self.perturbed.population_rate(window_ms)
        )

    def exceeds_activity_threshold(
        self, fraction: float = 0.1, within_s: float = 1.0, window_ms: float = 8.0
    ) -> bool:
        """Does the activity difference pass fraction * baseline mean rate
        within the given horizon after the deletion?"""
        dt = self.baseline.dt_ms
        lo = self.deletion_step + 1
        hi = min(
            self.baseline.n_steps, self.deletion_step + 1 + round(within_s * 1000 / dt)
        )
        div = self.activity_divergence(window_ms)[lo:hi]
        return bool(div.size and div.max() > fraction * self.baseline.mfr_hz)


def chaos_experiment(
    cfg: SnnConfig,
    deletion: tuple[int, float] | None = None,
) -> ChaosReport:
    """Rerun with one spike's delivery suppressed and report the divergence.

    ``deletion`` is (neuron id, time in ms); the first spike of that neuron
    at or after the time is suppressed.  Default: neuron 0's first spike
    after 1000 ms.  Before the suppressed step the runs are bit-identical.
    """
    neuron, t_from_ms = deletion if deletion is not None else (0, 1000.0)
    sim = Simulation(cfg)
    baseline = sim.run()
    mask = baseline.spike_neurons == neuron
    steps = baseline.spike_steps[mask]
    steps = steps[steps * baseline.dt_ms >= t_from_ms]
    if steps.size == 0:
        raise SpikeAbsentError(
            f"neuron {neuron} never fires at or after {t_from_ms} ms"
        )
    del_step = int(steps[0])
    perturbed = sim.run(suppress=(neuron, del_step))

    diff_v = baseline.v0_trace != perturbed.v0_trace
    diff_p = baseline.pop_counts != perturbed.pop_counts
    diff = np.flatnonzero(diff_v | diff_p)
    first = int(diff[0]) if diff.size else None
    return ChaosReport(baseline, perturbed, neuron, del_step, first)


def replay_failure(
    spike_neurons: np.ndarray,
    spike_steps: np.ndarray,
    n_steps: int,
    exc_mask: np.ndarray,
    inh_mask: np.ndarray,
    compressor: CompressorConfig,
) -> FailureStats:
    """Open-loop failure statistics on a fixed recorded spike train.

    Replays the recorded spike vectors through the presynaptic counting of
    every neuron at every step, isolating the compressor's undercount from
    any closed-loop dynamical feedback.
    """
    if spike_neurons.size == 0:
        raise ValueError("recorded spike train is empty")
    n = exc_mask.shape[0]
    n_exc = n // 2
    acc_e = _TypeAccumulator(exc_mask, compressor)
    acc_i = _TypeAccumulator(inh_mask, compressor)
    order = np.argsort(spike_steps, kind="stable")
    spike_steps = spike_steps[order]
    spike_neurons = spike_neurons[order]
    bounds = np.searchsorted(spike_steps, np.arange(n_steps + 1))
    tally = _FailureTally()
    ex_tot = np.zeros(n)
    ap_tot = np.zeros(n)
    for t in range(n_steps):
        ids = spike_neurons[bounds[t]:bounds[t + 1]]
        if ids.size == 0:
            continue
        got_e = acc_e.counts(ids[ids < n_exc])
        got_i = acc_i.counts(ids[ids >= n_exc])
        if got_e is None and got_i is None:
            continue
        ex_tot.fill(0.0)
        ap_tot.fill(0.0)
        for got in (got_e, got_i):
            if got is not None:
                act, ex, ap = got
                ex_tot[act] += ex
                ap_tot[act] += ap
        tally.add(ex_tot, ap_tot)
    return tally.result()


def population_activity(
    pop_counts: np.ndarray, n: int, dt_ms: float, window_ms: float = 8.0
) -> np.ndarray:
    """Centered moving average of the population rate, spikes/s per neuron."""
    if window_ms <= 0:
        raise ValueError("window must be positive")
    rate = pop_counts / (n * dt_ms * 1e-3)
    w = max(1, round(window_ms / dt_ms))
    kernel = np.full(w, 1.0 / w)
    return np.convolve(rate, kernel, mode="same")
