"""Approximate Hamming-weight compressors and their effect on a spiking network."""

__version__ = "0.1.0"

from .bitvec import (
    BitVector,
    RngStream,
    bitwise_and,
    exact_weight,
    from_indices,
    make_zero,
    random_fixed_weight,
)
from .compressor import (
    CompressedVector,
    CompressorConfig,
    LutKind,
    approx_weight,
    build,
    compress_block,
    lut_apply,
    preset,
    preset_labels,
    resource_estimate,
)
from .analysis import (
    AccuracyReport,
    SweepReport,
    accuracy_audit,
    density_sweep,
    enumerate_accuracy_combinatorial,
    enumerate_accuracy_exhaustive,
    relative_error,
)
from .snn import (
    ChaosReport,
    FailureStats,
    LearningParams,
    NetworkConfig,
    NeuronParams,
    PhaseSchedule,
    Simulation,
    SnnConfig,
    SnnResult,
    accumulate_presynaptic,
    build_network,
    chaos_experiment,
    default_params,
    load_params,
    population_activity,
    replay_failure,
    rls_update,
    run_experiment,
)
