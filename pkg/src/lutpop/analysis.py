"""Accuracy enumeration and randomized density-sweep error statistics.

Two independent routes compute the exact fraction of inputs a tree counts
correctly: a vectorized scan over all 2^width blocks, and a dynamic program
that convolves per-LUT weight distributions through the levels with exact
integer multiplicities.  They must agree wherever both run.

Density sweeps draw fixed-weight random vectors and report the mean and
sample standard deviation of the relative undercount, in percent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .bitvec import RngStream
from .compressor import CompressorConfig, LutKind, batch_totals

__all__ = [
    "AccuracyReport",
    "SweepReport",
    "enumerate_accuracy_exhaustive",
    "enumerate_accuracy_combinatorial",
    "relative_error",
    "density_sweep",
    "default_density_grid",
    "reference_correct_percent",
    "accuracy_audit",
]

EXHAUSTIVE_WIDTH_LIMIT = 25

# Published correct-output percentages for the twelve shallow arrangements.
# E, F, H, I, K, L are known to disagree with straightforward counting under
# the significance-grouped wiring used here; the audit reports both values
# side by side and flags ratios beyond 2x rather than forcing agreement.
_REFERENCE_CORRECT_PCT: dict[str, float] = {
    "A": 11.0,
    "B": 50.0,
    "C": 81.0,
    "D": 5.4e-08,
    "E": 3.8e-06,
    "F": 4.7e-06,
    "G": 4.9e-02,
    "H": 1.9e-02,
    "I": 1.9e-02,
    "J": 4.9e-02,
    "K": 1.7e-03,
    "L": 7.8e-03,
}

_AUDITED_LABELS = ("E", "F", "H", "I", "K", "L")


@dataclass(frozen=True)
class AccuracyReport:
    """Exact correct-output fraction over all possible block inputs."""

    config: str
    block_width: int
    correct_count: int
    total_inputs: int
    method: str

    @property
    def percent_correct(self) -> float:
        # exact integers until this one final division
        return float(Fraction(100 * self.correct_count, self.total_inputs))

    @property
    def fraction_correct(self) -> Fraction:
        return Fraction(self.correct_count, self.total_inputs)


@dataclass(frozen=True)
class SweepReport:
    """Per-density mean/std of the relative undercount, in percent."""

    config: str
    n: int
    trials: int
    seed: int
    rows: tuple[tuple[float, float, float], ...]  # (density, mean %, std %)

    def densities(self) -> list[float]:
        return [r[0] for r in self.rows]

    def mean_errors(self) -> list[float]:
        return [r[1] for r in self.rows]


def reference_correct_percent(label: str) -> float:
    return _REFERENCE_CORRECT_PCT[label]


def enumerate_accuracy_exhaustive(
    config: CompressorConfig,
    width_limit: int = EXHAUSTIVE_WIDTH_LIMIT,
    chunk_bits: int = 20,
) -> AccuracyReport:
    """Scan every possible block and count exact matches.

    Refuses widths beyond ``width_limit`` (2^25 is about half a minute);
    use the combinatorial route for wider trees.
    """
    w = config.block_width
    if w > width_limit:
        raise ValueError(
            f"block width {w} exceeds exhaustive limit {width_limit}; "
            f"use enumerate_accuracy_combinatorial"
        )
    if config.is_exact:
        return AccuracyReport(config.name, w, 1 << w, 1 << w, "exhaustive")

    plan = config.plan
    fan1 = plan.fan1
    n1 = plan.n_level1
    shifts = np.array([l * fan1 for l in range(n1)], dtype=np.uint64)
    masks = np.array(
        [(1 << lut.real_slots) - 1 for lut in plan.levels[0]], dtype=np.uint64
    )

    total = 1 << w
    step = 1 << min(chunk_bits, w)
    correct = 0
    for base in range(0, total, step):
        xs = np.arange(base, base + step, dtype=np.uint64)
        counts = np.bitwise_count(
            (xs[:, None] >> shifts[None, :]) & masks[None, :]
        ).astype(np.uint8)
        totals = batch_totals(config, counts)
        exact = np.bitwise_count(xs).astype(np.int64)
        correct += int((totals == exact).sum())
    return AccuracyReport(config.name, w, correct, total, "exhaustive")


def _pack_get(packed: int, slot: int) -> int:
    return (packed >> (2 * slot)) & 3


def _pack_add(packed: int, slot: int, bit: int, cap: int) -> int:
    if not bit:
        return packed
    cur = (packed >> (2 * slot)) & 3
    if cur >= cap:
        return packed
    return packed + (1 << (2 * slot))


def enumerate_accuracy_combinatorial(config: CompressorConfig) -> AccuracyReport:
    """Exact correct-count by dynamic programming over the tree.

    Each level-1 LUT contributes a (weight -> digit) table with multiplicity
    C(slots, weight); the joint distribution of (true weight, downstream
    saturating counts, finished digit total) is convolved LUT by LUT, with
    upstream LUTs retired as soon as their last input arrives.  Counts are
    saturated at each LUT's cap, which the digit value cannot see past.
    """
    w = config.block_width
    if config.is_exact:
        return AccuracyReport(config.name, w, 1 << w, 1 << w, "combinatorial")

    plan = config.plan
    upper: list[tuple[int, int]] = []      # (level >= 2 index, lut index)
    slot_of: dict[tuple[int, int], int] = {}
    for li, level in enumerate(plan.levels[1:], start=1):
        for ui, _ in enumerate(level):
            slot_of[(li, ui)] = len(upper)
            upper.append((li, ui))

    n_levels = len(plan.levels)
    arity = [lvl[0].kind.output_bits for lvl in plan.levels]

    # bit (level, id) -> consuming (level+1) LUT, or None past the top
    def target_of(level: int, bit_id: int) -> tuple[int, int] | None:
        if level == n_levels - 1:
            return None
        for ui, lut in enumerate(plan.levels[level + 1]):
            if bit_id in lut.srcs:
                return (level + 1, ui)
        raise AssertionError("unconsumed bit in wiring plan")

    targets = [
        [target_of(li, b) for b in range(len(level) * arity[li])]
        for li, level in enumerate(plan.levels)
    ]

    # completion time of each upper LUT = last level-1 LUT it depends on
    comp_time: dict[tuple[int, int], int] = {}
    for li, level in enumerate(plan.levels):
        for ui, lut in enumerate(level):
            if li == 0:
                comp_time[(0, ui)] = ui
                continue
            t = -1
            for s in lut.srcs:
                if s >= 0:
                    t = max(t, comp_time[(li - 1, s // arity[li - 1])])
            comp_time[(li, ui)] = max(t, 0)
    schedule: dict[int, list[tuple[int, int]]] = {}
    for key in upper:
        schedule.setdefault(comp_time[key], []).append(key)
    for lst in schedule.values():
        lst.sort()

    caps = {key: plan.levels[key[0]][key[1]].eff_cap for key in upper}
    w_bits = max(w.bit_length(), 1)
    a_bits = max(config.saturation_ceiling().bit_length(), 1)
    w_shift, a_shift = 0, w_bits

    def route_bits(key: tuple[int, int], value: int, packed: int, approx: int):
        """Send a finished LUT's output bits up, cascading completions."""
        li, ui = key
        kind = plan.levels[li][ui].kind
        for bi, bit in enumerate(kind.digit_bits(value)):
            tgt = targets[li][ui * arity[li] + bi]
            if tgt is None:
                continue
            packed = _pack_add(packed, slot_of[tgt], bit, caps[tgt])
        return packed, approx

    dist: dict[int, int] = {0: 1}
    for t, lut in enumerate(plan.levels[0]):
        fan_tables = [
            (wt, math.comb(lut.real_slots, wt), min(wt, lut.kind.cap))
            for wt in range(lut.real_slots + 1)
        ]
        finishing = schedule.get(t, [])
        nxt: dict[int, int] = {}
        for state, mult in dist.items():
            w0 = state & ((1 << w_bits) - 1)
            a0 = (state >> a_shift) & ((1 << a_bits) - 1)
            counts0 = state >> (w_bits + a_bits)
            for wt, m, digit in fan_tables:
                counts, approx = counts0, a0
                if n_levels == 1:
                    approx += digit * plan.digit_sigs[t]
                else:
                    counts, approx = route_bits((0, t), digit, counts, approx)
                for key in finishing:
                    slot = slot_of[key]
                    v = _pack_get(counts, slot)
                    counts &= ~(3 << (2 * slot))
                    li, ui = key
                    if li == n_levels - 1:
                        approx += v * plan.levels[li][ui].in_sig
                    else:
                        counts, approx = route_bits(key, v, counts, approx)
                new = (w0 + wt) | (approx << a_shift) | (
                    counts << (w_bits + a_bits)
                )
                nxt[new] = nxt.get(new, 0) + mult * m
        dist = nxt

    correct = 0
    total_check = 0
    for state, mult in dist.items():
        assert state >> (w_bits + a_bits) == 0, "unretired partial counts"
        w0 = state & ((1 << w_bits) - 1)
        a0 = (state >> a_shift) & ((1 << a_bits) - 1)
        total_check += mult
        if w0 == a0:
            correct += mult
    assert total_check == 1 << w
    return AccuracyReport(config.name, w, correct, 1 << w, "combinatorial")


def relative_error(exact: int, approx: int) -> float:
    """Relative undercount (exact - approx) / exact; exact must be >= 1."""
    if exact < 1:
        raise ValueError("relative error undefined for zero exact weight")
    return (exact - approx) / exact


def default_density_grid() -> list[float]:
    """1% steps up to 10%, then 10% steps to 100%."""
    return [i / 100 for i in range(1, 10)] + [i / 100 for i in range(10, 101, 10)]


def _trial_counts(config: CompressorConfig, n: int, w: int,
                  seed: int, d_idx: int, trials: int) -> np.ndarray:
    """Level-1 LUT counts for every trial vector at one density."""
    if config.is_exact:
        luts_per_block = 1
        n_blocks = n
        fan1 = 1
    else:
        luts_per_block = config.plan.n_level1
        n_blocks = -(-n // config.block_width)
        fan1 = config.plan.fan1
    root = RngStream(seed)
    counts = np.empty((trials, n_blocks * luts_per_block), dtype=np.int64)
    for t in range(trials):
        gen = root.substream(d_idx, t).generator
        pos = gen.choice(n, size=w, replace=False)
        if config.is_exact:
            flat = pos
        else:
            blk, off = np.divmod(pos, config.block_width)
            flat = blk * luts_per_block + off // fan1
        counts[t] = np.bincount(flat, minlength=n_blocks * luts_per_block)
    return counts.reshape(trials * n_blocks, luts_per_block)


def density_sweep(
    config: CompressorConfig,
    n: int,
    densities: list[float] | None = None,
    trials: int = 1000,
    seed: int = 0,
) -> SweepReport:
    """Mean/std relative undercount over fixed-weight random vectors.

    Each density d uses weight round(d*n); the trial at (density index i,
    trial index t) draws from stream (i, t) of the seed, so results are
    identical however trials are scheduled and the same vectors are reused
    across configs for paired comparisons.
    """
    if densities is None:
        densities = default_density_grid()
    if trials < 2:
        raise ValueError("need at least 2 trials for a sample std")
    if any(d2 <= d1 for d1, d2 in zip(densities, densities[1:])):
        raise ValueError("densities must be strictly increasing")
    rows = []
    for d_idx, d in enumerate(densities):
        w = round(d * n)
        if w < 1:
            raise ValueError(f"density {d} rounds to zero weight at n={n}")
        if w > n:
            raise ValueError(f"density {d} exceeds 100% at n={n}")
        counts = _trial_counts(config, n, w, seed, d_idx, trials)
        totals = batch_totals(config, counts).reshape(trials, -1).sum(axis=1)
        errs = (w - totals) / w * 100.0
        rows.append((d, float(np.mean(errs)), float(np.std(errs, ddof=1))))
    return SweepReport(config.name, n, trials, seed, tuple(rows))


@dataclass(frozen=True)
class AuditRow:
    config: str
    oracle_percent: float
    reference_percent: float
    ratio: float
    flagged: bool


def accuracy_audit(labels: tuple[str, ...] = _AUDITED_LABELS,
                   flag_ratio: float = 2.0) -> list[AuditRow]:
    """Oracle correct-output percentages next to the published ones.

    Rows whose ratio falls outside [1/flag_ratio, flag_ratio] are flagged.
    Disagreement on the flagged rows is expected and deliberate; the point
    is a deterministic, reviewable comparison.
    """
    from .compressor import preset

    rows = []
    for label in labels:
        rep = enumerate_accuracy_combinatorial(preset(label))
        ours = rep.percent_correct
        ref = _REFERENCE_CORRECT_PCT[label]
        ratio = ours / ref
        rows.append(
            AuditRow(label, ours, ref, ratio,
                     ratio > flag_ratio or ratio < 1.0 / flag_ratio)
        )
    return rows
