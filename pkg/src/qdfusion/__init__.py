"""Quantum-dot cascaded-emission and PBS-fusion simulator.

Models the biexciton-exciton (XX-X) two-photon cascade of a semiconductor
quantum dot, the temporal correlation it imprints on the emitted pair, and
linear-optical fusion circuits (single- and double-PBS) that concatenate two
pairs into a four-photon GHZ state.  Includes the characterization toolbox
used around such sources: PBS-type Hong-Ou-Mandel interference, pulsed g2,
two-qubit tomography, GHZ population/coherence estimators, and a switched
fiber-loop multiplexing protocol.
"""

__version__ = "0.1.0"

from .cascade import (
    HBAR_UEV_PS,
    EmitterParams,
    TimeGrid,
    TemporalAmplitude,
    SchmidtDecomposition,
    from_lifetimes,
    nominal_emitter,
    cascade_amplitude,
    joint_spectrum,
    discretize,
    reduced_density,
    purity,
    indistinguishability_bound,
    schmidt,
    pair_state,
)
from .polarization import (
    Observable,
    PolarizationState,
    m_theta,
    ghz_pure,
    ghz_from_decomposition,
    expectation,
    tensor,
    partial_trace,
    fidelity,
)
from .fusion import (
    Wandering,
    FusionConfig,
    FusionOutcome,
    pbs_mode_matrix,
    pbs_mode_transform,
    hom_pbs,
    fuse,
    fuse_analytic,
)
from .metrics import (
    CoherenceScan,
    TomographyRecord,
    population,
    coherence_scan,
    coherence_fit,
    coherence_eq3,
    ghz_fidelity,
    tomography_reconstruct,
    max_entangled_fidelity,
)
from .experiment import (
    SourceModel,
    CalibrationTargets,
    MeasurementRecord,
    sample_outcomes,
    simulate_hbt,
    rabi_population,
    calibrate,
    end_to_end,
)
from .multiplex import (
    LoopConfig,
    SwitchSchedule,
    schedule,
    simulate_loop,
)
