"""Delay-Doppler channel estimation with ISTA and an unfolded ISTA network."""

from .complex_core import (
    SplitComplexMatrix,
    SplitComplexVector,
    cmul_mat_vec,
    cvec_axpby,
    hermitian,
    largest_eigenvalue_gram,
    norm2,
)
from .errors import ConvergenceError, DomainError, IntegrityError, NumericError, ShapeError
from .ista import IstaConfig, IstaResult, ista_solve, ista_step, select_lambda, soft_threshold
from .network import UdnnModel, forward, forward_traced, init_from_ista, load_model, save_model
from .signal_model import (
    FrequencyGrid,
    MeasurementModel,
    OfdmConfig,
    PathSet,
    atom,
    build_grid,
    build_measurement_model,
    snr_to_sigma,
    synthesize_ground_truth_x,
    synthesize_measurement,
)
from .training import TrainConfig, evaluate_mse_db, generate_dataset, train

__version__ = "0.1.0"
