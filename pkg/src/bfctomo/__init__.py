"""Randomized electro-optic tomography of frequency-bin entangled photon pairs.

The package simulates coincidence measurements of two-qudit frequency-bin
states under random pulse-shaper phases and electro-optic modulation,
reconstructs the full density matrix by Markov-chain Monte Carlo over a
uniform (Bures) prior with a Poisson counting likelihood, and provides
measurement-design diagnostics plus analytic noise-model references.
"""

__version__ = "0.1.0"

from .calibration import (
    CorrelationFit,
    CorrelationParams,
    correlation_model,
    fit_correlation,
    integrated_correlation,
)
from .design import (
    BandProbe,
    DesignHistogram,
    DesignStudy,
    band_probe_predictions,
    design_histogram,
    eom_operator,
    informational_completeness,
    phase_ramp,
    weak_mixer,
)
from .inference import (
    ChainConfig,
    ChainResult,
    FluxModel,
    ParamVector,
    PoissonLogLikelihood,
    PosteriorSummary,
    bayes_estimates,
    bures_density,
    bures_density_batch,
    default_K0,
    haar_unitary_from_ginibre,
    load_checkpoint,
    log_likelihood,
    pcn_step,
    run_chain,
    save_checkpoint,
    sequential_fidelity_schedule,
)
from .measurement import (
    MeasurementMatrix,
    MeasurementSetting,
    SettingPlan,
    measurement_matrix,
    outcome_probabilities,
    random_settings,
    singular_spectrum,
    transfer_matrices,
)
from .simulate import CarStats, CoincidenceDataset, car_of_dataset, expected_rates, simulate_counts
from .states import (
    DensityMatrix,
    DispersionConfig,
    FrequencyGrid,
    PureState,
    car_for_lambda,
    dispersion_phases,
    fidelity_pure,
    lambda_for_car,
    log_negativity,
    make_density,
    maximally_entangled,
    partial_transpose,
    uhlmann_fidelity,
    white_noise_fidelity,
    white_noise_log_negativity,
    white_noise_state,
)

__all__ = [name for name in dir() if not name.startswith("_")]
