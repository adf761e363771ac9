"""Thermoacoustic tomography in attenuating media.

Forward simulation of the damped acoustic wave equation and reconstruction
of the initial pressure from boundary measurements by an attenuation-flipped
time reversal iterated as a Neumann series.
"""

from .fields import (BoundaryTrace, FieldFormatError, Grid2D, ScalarField2D,
                     WavePair, boundary_sensors, field_from_function, make_grid,
                     pair_add, pair_scale, pair_sub, read_field, read_trace,
                     sample_bilinear, write_field, write_trace, zero_field,
                     zero_pair)
from .media import (AttenuationParams, Medium, attenuation_profile,
                    build_attenuation, build_phantom, build_sound_speed,
                    make_medium, undamped_medium, uniform_medium)
from .raygeo import (Ray, TrappedRayError, estimate_T0, estimate_T1,
                     ray_length_sweep, trace_ray)
from .reconstruct import (ReconstructionReport, SeriesDivergedError, Variant,
                          contraction_ratio, error_op, measure, neumann_series,
                          reconstruct_source, relative_error, tat_pair,
                          time_reverse, write_errors_csv)
from .wavesim import (ForwardResult, SolveConfig, SolverInstabilityError,
                      backward_solve, energy_norm, extended_energy,
                      forward_solve, harmonic_extension, local_energy,
                      time_step)

__version__ = "0.1.0"
