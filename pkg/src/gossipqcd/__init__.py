"""Bayesian quickest change detection over random-gossip sensor networks:
Shiryaev detectors, exact Markov-chain analysis of the gossip layer, and a
Monte Carlo harness for false-alarm decay rates."""

__version__ = "0.1.0"

from .config import config_from_dict, config_to_dict, load_config, reference_config_path
from .detector import DetectorConfig, DetectorMode, DetectorState, decompose, initial_state, step, threshold_from_pfa
from .errors import GossipQCDError
from .experiments import ExperimentConfig, estimate_pfa_cadd, first_layer, fit_decay_rate, run_trial
from .gossip import propagate, sample_period, subset_distribution_exact, subset_distribution_mc
from .markov import bound_params, hitting_tail
from .obsmodel import Gaussian, ObservationModel, SensorDensityPair, Tabulated, distributed_kl, gaussian_mean_shift_model
from .topology import Graph, Matching, averaged_matrix, build_graph, complete_graph, enumerate_matchings, uniform_distribution
