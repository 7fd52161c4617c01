"""CRLB-driven RIS phase design for single-BS mm-wave MS localisation."""
from .beamforming import (AltOptConfig, AltOptResult, GdmConfig, OptimizationTrace,
                          alternating_optimize, crlb_and_gradient, crlb_gradient,
                          fim_entry_gradients, fim_gradients, gdm_optimize)
from .channel import (ArrayConfig, NoiseModel, ParamVector, PilotMatrix, array_response,
                      assemble_channel, make_pilot, synthesize_rx, wrap_phases, xi_matrices)
from .errors import (ConfigError, DegenerateGeometry, DimensionMismatch, GridTooLarge,
                     IndexOutOfRange, LineSearchFailed, RislocError, SingularFim)
from .estimator import EstimatorSpec, estimate, log_likelihood
from .fim import (KappaTensor, PositionFim, crlb, fim_eta_aoa_block, kappa_from_geometry,
                  kappa_tensor, position_fim, varpi)
from .geometry import (RisLayout, ScenarioGeometry, TransformMatrix, compute_aod, compute_aoa,
                       expand_layout, transform_matrix, transform_matrix_from_angles)
from .scenario import Scenario

__version__ = "0.1.0"
