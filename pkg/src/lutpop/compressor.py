"""Saturating LUT primitives, leveled compressor trees, and the exact adder.

A compressor tree maps a fixed-width block of bits to a handful of weighted
digits whose weighted sum never exceeds the block's true population count.
Three primitives are modeled, each a saturating counter over its inputs:

* ``OR6``: six inputs, one output bit (counts up to 1).
* ``SAT2_THERMOMETER``: five inputs, two thermometer-coded bits (up to 2).
* ``SAT3_POSITIONAL``: five inputs, one 2-bit positional digit (up to 3).

Trees cascade these in levels.  Output bits of one level carry a
significance; they are regrouped and fed to the next level.  The final
level's digits go to an exact integer adder, which is what every
``approx_weight`` call models.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .bitvec import BitVector

__all__ = [
    "LutKind",
    "CompressorConfig",
    "CompressedVector",
    "lut_apply",
    "preset",
    "preset_labels",
    "resolve_label",
    "build",
    "compress_block",
    "approx_weight",
    "resource_estimate",
]

_WIRING_SEARCH_LIMIT = 4096


class LutKind(Enum):
    """The three saturating-counter LUT primitives."""

    OR6 = ("or6", 6, 1)
    SAT2_THERMOMETER = ("sat2_thermometer", 5, 2)
    SAT3_POSITIONAL = ("sat3_positional", 5, 3)

    def __init__(self, label: str, fan_in: int, cap: int):
        self.label = label
        self.fan_in = fan_in
        self.cap = cap

    @property
    def output_bits(self) -> int:
        # OR6 emits one bit; both five-input kinds emit two.
        return 1 if self is LutKind.OR6 else 2

    def digit_bits(self, value: int) -> tuple[int, ...]:
        """Encode a digit value as this kind's output bit pattern."""
        if self is LutKind.OR6:
            return (1 if value >= 1 else 0,)
        if self is LutKind.SAT2_THERMOMETER:
            return (1 if value >= 1 else 0, 1 if value >= 2 else 0)
        return (value >> 1, value & 1)  # positional: hi then lo

    def bit_significances(self, input_sig: int) -> tuple[int, ...]:
        """Significance carried by each output bit, given the input class."""
        if self is LutKind.OR6:
            return (input_sig,)
        if self is LutKind.SAT2_THERMOMETER:
            return (input_sig, input_sig)
        return (2 * input_sig, input_sig)


def lut_apply(kind: LutKind, bits: BitVector) -> int:
    """Saturating count: min(popcount(bits), kind.cap)."""
    if bits.length != kind.fan_in:
        raise ValueError(
            f"{kind.name} takes {kind.fan_in} inputs, got {bits.length}"
        )
    return min(bits.weight(), kind.cap)


@dataclass(frozen=True)
class _Lut:
    """One LUT instance in a wiring plan."""

    kind: LutKind
    srcs: tuple[int, ...]      # previous-level bit ids; -1 marks a zero pad
    in_sig: int                # significance class consumed (min, for OR6)
    eff_cap: int               # reachable maximum of the output value
    real_slots: int            # non-pad inputs (level 1: live block bits)


@dataclass(frozen=True)
class _Plan:
    """Compiled wiring of one compressor tree instance."""

    block_width: int
    levels: tuple[tuple[_Lut, ...], ...]
    digit_caps: tuple[int, ...]     # effective cap per final digit
    digit_sigs: tuple[int, ...]     # significance per final digit

    @property
    def n_level1(self) -> int:
        return len(self.levels[0])

    @property
    def fan1(self) -> int:
        return self.levels[0][0].kind.fan_in

    def lut_counts(self) -> dict[LutKind, int]:
        out: dict[LutKind, int] = {}
        for level in self.levels:
            for lut in level:
                out[lut.kind] = out.get(lut.kind, 0) + 1
        return out


@dataclass(frozen=True)
class CompressorConfig:
    """A leveled tree arrangement; empty ``levels`` means no compression."""

    name: str
    levels: tuple[LutKind, ...]
    block_width: int
    output_spec: tuple[tuple[int, int], ...]   # (max digit value, significance)
    plan: "_Plan | None" = field(default=None, compare=False, repr=False)

    @property
    def is_exact(self) -> bool:
        return not self.levels

    def saturation_ceiling(self) -> int:
        return sum(cap * sig for cap, sig in self.output_spec)


@dataclass(frozen=True)
class CompressedVector:
    """Weighted digits produced by one block, input to the exact adder."""

    digits: tuple[tuple[int, int], ...]   # (value, significance)

    def total(self) -> int:
        return sum(v * s for v, s in self.digits)


class WiringError(ValueError):
    """A level arrangement that cannot be wired consistently."""

    def __init__(self, level_index: int, message: str):
        self.level_index = level_index
        super().__init__(f"level {level_index}: {message}")


def _wire(levels: tuple[LutKind, ...], width: int) -> tuple[_Plan, bool]:
    """Construct the tree for a block of ``width`` bits.

    Returns the plan and whether any zero padding was needed.  Bits of equal
    significance are grouped and packed left to right into next-level LUTs.
    OR6 levels pool every class (its output only reports "some input set",
    which is class-independent) and tag the result with the smallest input
    significance so the digit can never overcount.
    """
    padded = False
    fan1 = levels[0].fan_in
    n1 = -(-width // fan1)
    if n1 * fan1 != width:
        padded = True

    lvl1 = []
    for l in range(n1):
        real = min(fan1, width - l * fan1)
        lvl1.append(
            _Lut(levels[0], tuple(range(l * fan1, l * fan1 + fan1)),
                 1, min(levels[0].cap, real), real)
        )
    plan_levels = [tuple(lvl1)]

    # (significance, reachable max) of each bit emitted by the last level
    bits: list[tuple[int, int]] = []
    for lut in lvl1:
        sigs = lut.kind.bit_significances(lut.in_sig)
        maxs = lut.kind.digit_bits(lut.eff_cap)
        bits.extend(zip(sigs, maxs))

    for depth, kind in enumerate(levels[1:], start=2):
        if not bits:
            raise WiringError(depth, "no bits left to consume")
        order = list(range(len(bits)))
        if kind is LutKind.OR6:
            # one pool, ascending significance, stable
            order.sort(key=lambda i: bits[i][0])
            groups = [order]
        else:
            classes: dict[int, list[int]] = {}
            for i in order:
                classes.setdefault(bits[i][0], []).append(i)
            groups = [classes[s] for s in sorted(classes)]
        if any(not g for g in groups):
            raise WiringError(depth, "a significance class is empty")

        luts = []
        for g in groups:
            for start in range(0, len(g), kind.fan_in):
                chunk = g[start:start + kind.fan_in]
                pads = kind.fan_in - len(chunk)
                if pads:
                    padded = True
                srcs = tuple(chunk) + (-1,) * pads
                in_sig = min(bits[i][0] for i in chunk)
                eff = min(kind.cap, sum(bits[i][1] for i in chunk))
                luts.append(_Lut(kind, srcs, in_sig, eff, len(chunk)))
        plan_levels.append(tuple(luts))

        bits = []
        for lut in luts:
            sigs = lut.kind.bit_significances(lut.in_sig)
            maxs = lut.kind.digit_bits(lut.eff_cap)
            bits.extend(zip(sigs, maxs))

    final = plan_levels[-1]
    plan = _Plan(
        block_width=width,
        levels=tuple(plan_levels),
        digit_caps=tuple(l.eff_cap for l in final),
        digit_sigs=tuple(l.in_sig for l in final),
    )
    return plan, padded


def _compile(levels: tuple[LutKind, ...], block_width: int | None) -> _Plan:
    """Wire a tree, searching for the smallest pad-free width if unpinned."""
    if not levels:
        raise ValueError("levels must be non-empty; use preset('EXACT') for identity")
    if block_width is not None:
        if block_width < 1:
            raise ValueError("block_width must be >= 1")
        plan, _ = _wire(levels, block_width)
        return plan
    fan1 = levels[0].fan_in
    for n1 in range(1, _WIRING_SEARCH_LIMIT + 1):
        plan, padded = _wire(levels, n1 * fan1)
        if not padded:
            return plan
    raise WiringError(len(levels), "no pad-free arrangement found")


def build(levels: list[LutKind] | tuple[LutKind, ...],
          block_width: int | None = None,
          name: str | None = None) -> CompressorConfig:
    """Build a tree config from a level list.

    Without ``block_width`` the smallest block needing no zero padding is
    chosen (this reproduces the canonical preset widths).  An explicit
    ``block_width`` wires exactly that many live bits, padding short LUTs
    with zeros, which never changes a population count.
    """
    levels = tuple(levels)
    plan = _compile(levels, block_width)
    spec = tuple(zip(plan.digit_caps, plan.digit_sigs))
    cfg = CompressorConfig(
        name=name or "+".join(k.label for k in levels),
        levels=levels,
        block_width=plan.block_width,
        output_spec=spec,
        plan=plan,
    )
    ceiling = cfg.saturation_ceiling()
    if ceiling > cfg.block_width:
        raise WiringError(len(levels), f"ceiling {ceiling} exceeds width")
    return cfg


_O, _T, _P = LutKind.OR6, LutKind.SAT2_THERMOMETER, LutKind.SAT3_POSITIONAL

_PRESET_LEVELS: dict[str, tuple[LutKind, ...]] = {
    "A": (_O,),
    "B": (_T,),
    "C": (_P,),
    "D": (_O, _O),
    "E": (_O, _T),
    "F": (_O, _P),
    "G": (_T, _O),
    "H": (_T, _T),
    "I": (_T, _P),
    "J": (_P, _O),
    "K": (_P, _T),
    "L": (_P, _P),
    "D216": (_O, _O, _O),
    "D540": (_O, _O, _T, _O),
    "D1024": (_O, _O, _O, _O),
}

_LABEL_ALIASES = {
    "216": "D216",
    "540": "D540",
    "1024": "D1024",
    "EXACT": "EXACT",
}

_EXACT = CompressorConfig(
    name="EXACT", levels=(), block_width=1, output_spec=((1, 1),), plan=None
)

_preset_cache: dict[str, CompressorConfig] = {}


def preset_labels() -> list[str]:
    return list(_PRESET_LEVELS) + ["EXACT"]


def resolve_label(label: str) -> str:
    """Normalize a user-facing label (a..l, 216, 540, 1024, exact)."""
    up = label.strip().upper()
    up = _LABEL_ALIASES.get(up, up)
    if up != "EXACT" and up not in _PRESET_LEVELS:
        raise ValueError(f"unknown compressor label {label!r}")
    return up


def preset(label: str) -> CompressorConfig:
    """Canonical configuration for a named arrangement.

    A through L are the twelve one- and two-level shallow trees; D216, D540
    and D1024 are the deep block-OR trees; EXACT is the identity (no
    compression, the exact-count baseline).
    """
    key = resolve_label(label)
    if key not in _preset_cache:
        if key == "EXACT":
            _preset_cache[key] = _EXACT
        else:
            _preset_cache[key] = build(_PRESET_LEVELS[key], name=key)
    return _preset_cache[key]


# ---------------------------------------------------------------------------
# Evaluation: one vectorized engine shared by scalar ops, enumeration,
# density sweeps, and the network simulator.
# ---------------------------------------------------------------------------

def _emit_bits(kind: LutKind, digits: np.ndarray) -> np.ndarray:
    """Digits (M, n_luts) -> output bits (M, n_luts * output_bits)."""
    if kind is LutKind.OR6:
        return (digits >= 1).astype(np.uint8)
    if kind is LutKind.SAT2_THERMOMETER:
        b = np.stack([(digits >= 1), (digits >= 2)], axis=2)
        return b.astype(np.uint8).reshape(digits.shape[0], -1)
    b = np.stack([(digits >> 1), (digits & 1)], axis=2)
    return b.astype(np.uint8).reshape(digits.shape[0], -1)


def batch_digits(config: CompressorConfig, counts: np.ndarray) -> np.ndarray:
    """Final digit values for many blocks at once.

    ``counts[m, l]`` is the number of set bits feeding level-1 LUT ``l`` of
    block instance ``m``.  The tree's value depends on its input bits only
    through these counts, so this is an exact evaluation.
    """
    counts = np.asarray(counts)
    if config.is_exact:
        return counts.astype(np.int64, copy=True)
    plan = config.plan
    assert plan is not None
    m = counts.shape[0]
    digits = np.minimum(counts, plan.levels[0][0].kind.cap).astype(np.uint8)
    prev_kind = plan.levels[0][0].kind
    for level in plan.levels[1:]:
        bits = _emit_bits(prev_kind, digits)
        # append an always-zero column; pads index it
        bits = np.concatenate([bits, np.zeros((m, 1), np.uint8)], axis=1)
        src = np.array([l.srcs for l in level], dtype=np.int64)
        src[src < 0] = bits.shape[1] - 1
        gathered = bits[:, src.reshape(-1)].reshape(m, len(level), -1)
        sums = gathered.sum(axis=2, dtype=np.int64)
        caps = np.array([l.eff_cap for l in level], dtype=np.int64)
        digits = np.minimum(sums, caps).astype(np.uint8)
        prev_kind = level[0].kind
    return digits.astype(np.int64)


def batch_totals(config: CompressorConfig, counts: np.ndarray) -> np.ndarray:
    """Adder outputs (weighted digit sums) for many blocks at once."""
    digits = batch_digits(config, counts)
    if config.is_exact:
        return digits.sum(axis=1)
    sigs = np.asarray(config.plan.digit_sigs, dtype=np.int64)
    return digits @ sigs


def level1_counts_from_positions(config: CompressorConfig, positions: np.ndarray,
                                 n: int) -> np.ndarray:
    """Set-bit positions of an n-bit vector -> per-block level-1 LUT counts.

    Returns an array of shape (n_blocks, luts_per_block); the vector is
    zero-padded to a whole number of blocks.
    """
    w = config.block_width
    n_blocks = -(-n // w)
    if config.is_exact:
        luts_per_block = 1
        flat = positions
    else:
        fan1 = config.plan.fan1
        luts_per_block = config.plan.n_level1
        blk, off = np.divmod(positions, w)
        flat = blk * luts_per_block + off // fan1
    counts = np.bincount(flat, minlength=n_blocks * luts_per_block)
    return counts.reshape(n_blocks, luts_per_block)


def compress_block(config: CompressorConfig, block: BitVector) -> CompressedVector:
    """Evaluate one tree instance on one block."""
    if block.length != config.block_width:
        raise ValueError(
            f"block is {block.length} bits, config {config.name} "
            f"takes {config.block_width}"
        )
    if config.is_exact:
        return CompressedVector(((block.weight(), 1),))
    counts = level1_counts_from_positions(
        config, np.array(block.indices(), dtype=np.int64), config.block_width
    )
    digits = batch_digits(config, counts)[0]
    return CompressedVector(tuple(zip(digits.tolist(), config.plan.digit_sigs)))


def approx_weight(config: CompressorConfig, v: BitVector) -> int:
    """Population count through the tree plus the exact final adder.

    The vector is zero-padded to a multiple of the block width, each block
    compressed independently, and all weighted digits summed exactly.  The
    result never exceeds the true count.
    """
    if config.is_exact:
        return v.weight()
    counts = level1_counts_from_positions(
        config, np.array(v.indices(), dtype=np.int64), v.length
    )
    return int(batch_totals(config, counts).sum())


def resource_estimate(config: CompressorConfig, n: int) -> dict[LutKind, int]:
    """LUT instances per kind to cover an n-bit input, padded trees included."""
    if n < 1:
        raise ValueError("input width must be >= 1")
    if config.is_exact:
        return {}
    n_trees = -(-n // config.block_width)
    return {k: c * n_trees for k, c in config.plan.lut_counts().items()}


def or_block_weight(config: CompressorConfig, v: BitVector) -> int:
    """Independent predicate for [x:1) trees: count of nonempty blocks."""
    w = config.block_width
    return sum(
        1 for start in range(0, v.length, w) if v.field(start, w) != 0
    )
