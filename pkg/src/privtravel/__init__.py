"""Travel-time estimation from GPS traces released under geo-indistinguishability.

Trajectories are sanitized record by record with planar Laplace noise,
snapped back onto a road network, and turned into an empirical travel-time
distribution for a route. Helpers measure how much utility survives and how
well an adversary can still pin down the true positions.
"""
from .geometry import (GeometryError, MappedPoint, RoadNetwork, Route, RouteStep, Trajectory, euclidean_distance,
                       inverse_project, project_latlon)
from .io import InputError, load_traces, read_mapped, read_network, read_route, write_mapped, write_traces
from .mapmatch import MappedTrajectory, SegmentIndex, map_trajectories, map_trajectory, snap_point
from .metrics import (CpdReport, DeviationReport, MonteCarloEstimate, average_distance, cpd, cpd_exact_oracle,
                      cpd_hit_probability, deviation_moments, distance_usefulness, gamma2_cdf,
                      squared_deviation_closed_form, usefulness_delta)
from .pipeline import ExperimentConfig, PipelineError, SimulateSpec, run_experiment, sanitize_all
from .sanitizer import (PrivacyBudget, PrivacyBudgetError, sample_polar_noise, sanitize_point, sanitize_points,
                        sanitize_trajectory)
from .seeding import derive_rng, derive_seed
from .tpu import (EmpiricalCdf, NoDataError, TpuResult, TrajectoryEvaluation, empirical_cdf, evaluate_trajectory,
                  ks_distance, query_arrival_probability, query_time_at_confidence, run_tpu, weighted_tpu)
from .tracegen import SpeedModel, fit_inverse_weibull, make_network, simulate_experiment, subsample_records

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
