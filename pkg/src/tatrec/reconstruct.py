"""Measurement, time reversal, and the Neumann-series reconstruction.

The measurement operator takes initial data to its boundary trace. A time
reversal back-propagates a trace from t = T, seeding the terminal value with
the harmonic extension of the last trace sample. Composing the two and
subtracting from the identity gives the error operator; iterating it yields
the Neumann series whose partial sums converge to the initial data when the
error operator contracts. Two back-projection variants are supported: the
attenuation-flipped one (contractive for any smooth nonnegative attenuation
supported in the domain) and the plain damped one (contractive only for
small attenuation, divergent beyond that).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .fields import (BoundaryTrace, ScalarField2D, WavePair, boundary_sensors,
                     pair_sub)
from .media import Medium
from .wavesim import (SolveConfig, _free_space_march, backward_solve,
                      energy_norm, harmonic_extension)


class Variant(Enum):
    """Which equation the back-projection solves."""

    SIGN_FLIPPED = "signflip"
    HOMAN = "homan"

    @property
    def sign(self) -> int:
        return -1 if self is Variant.SIGN_FLIPPED else 1

    @classmethod
    def parse(cls, name: str) -> "Variant":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown variant {name!r}; use 'signflip' or 'homan'") from None


class SeriesDivergedError(RuntimeError):
    """The iteration produced a non-finite term; carries the partial report."""

    def __init__(self, term_index: int, report: "ReconstructionReport"):
        super().__init__(f"Neumann iteration diverged at term {term_index}")
        self.term_index = term_index
        self.report = report


@dataclass(eq=False)
class ReconstructionReport:
    """Per-term partial sums and diagnostics of one Neumann-series run.

    errors_percent[m] is the relative L2 error of the u-component of the
    (m+1)-term partial sum against the ground truth (when supplied);
    contraction_ratios[m] is the energy-norm ratio of consecutive residuals,
    an empirical estimate of the error-operator norm.
    """

    iterates: list[WavePair] = field(default_factory=list)
    errors_percent: list[float] = field(default_factory=list)
    contraction_ratios: list[float] = field(default_factory=list)

    @property
    def n_terms(self) -> int:
        return len(self.iterates)

    @property
    def final(self) -> WavePair:
        return self.iterates[-1]


def tat_pair(f: ScalarField2D, medium: Medium) -> WavePair:
    """Thermoacoustic initial data [f, -a f] for a source image f."""
    if f.grid != medium.grid:
        raise ValueError("source grid differs from the medium grid")
    return WavePair(f, ScalarField2D(medium.grid, -medium.a.values * f.values))


def measure(f: WavePair, medium: Medium, cfg: SolveConfig) -> BoundaryTrace:
    """Boundary trace of the forward solve; requires f1 = 0 on the boundary,
    so the first trace sample is identically zero.
    """
    if np.any(f.u.values.ravel()[boundary_sensors(medium.grid)] != 0.0):
        raise ValueError("measurement needs initial data vanishing on the boundary")
    trace, *_ = _free_space_march(f, medium, cfg, diagnostics=False)
    return trace


def time_reverse(h: BoundaryTrace, medium: Medium, cfg: SolveConfig,
                 variant: Variant = Variant.SIGN_FLIPPED) -> WavePair:
    """Back-propagate a boundary trace to t = 0.

    The terminal value is the harmonic extension of the last trace sample,
    the terminal velocity is zero, and the trace is injected as Dirichlet
    data while marching backward with the variant's damping sign.
    """
    phi = harmonic_extension(h.values[-1], medium.grid)
    terminal = WavePair(phi, ScalarField2D(medium.grid, np.zeros(medium.grid.shape)))
    return backward_solve(h, terminal, medium, variant.sign, cfg)


def error_op(g: WavePair, medium: Medium, cfg: SolveConfig,
             variant: Variant = Variant.SIGN_FLIPPED) -> WavePair:
    """One application of the reconstruction error operator:
    g minus the time reversal of its own measurement.
    """
    return pair_sub(g, time_reverse(measure(g, medium, cfg), medium, cfg, variant))


def relative_error(recon: ScalarField2D, truth: ScalarField2D) -> float:
    """Relative L2 error of a reconstruction against the truth, in percent."""
    if recon.grid != truth.grid:
        raise ValueError("reconstruction and truth live on different grids")
    denom = float(np.linalg.norm(truth.values))
    if denom == 0.0:
        raise ValueError("truth image has zero norm")
    return 100.0 * float(np.linalg.norm(recon.values - truth.values)) / denom


def contraction_ratio(g: WavePair, medium: Medium, cfg: SolveConfig,
                      variant: Variant = Variant.SIGN_FLIPPED) -> float:
    """Energy-norm ratio of the error operator's output to its input."""
    denom = energy_norm(g, medium.c)
    if denom == 0.0:
        raise ValueError("input state has zero energy")
    return energy_norm(error_op(g, medium, cfg, variant), medium.c) / denom


def neumann_series(h: BoundaryTrace, medium: Medium, cfg: SolveConfig,
                   variant: Variant, n_terms: int,
                   truth: ScalarField2D | None = None,
                   progress=None) -> ReconstructionReport:
    """Run the Neumann-series reconstruction from a measured trace.

    The first term is the plain time reversal; each following term applies
    the error operator to the previous residual and adds it to the running
    sum. Relative errors of the u-component are recorded against `truth`
    when given. A non-finite term raises SeriesDivergedError carrying the
    report accumulated so far (expected for the plain variant at high
    attenuation).

    Parameters
    ----------
    progress : callable, optional
        Called as progress(term_index, report) after each term.
    """
    if n_terms < 1:
        raise ValueError("need at least one term")
    report = ReconstructionReport()

    residual = time_reverse(h, medium, cfg, variant)
    total = residual
    prev_norm = energy_norm(residual, medium.c)
    report.iterates.append(total)
    if truth is not None:
        report.errors_percent.append(relative_error(total.u, truth))
    if progress is not None:
        progress(0, report)

    for m in range(1, n_terms):
        residual = error_op(residual, medium, cfg, variant)
        if not (np.all(np.isfinite(residual.u.values)) and np.all(np.isfinite(residual.ut.values))):
            raise SeriesDivergedError(m, report)
        norm = energy_norm(residual, medium.c)
        report.contraction_ratios.append(norm / prev_norm if prev_norm > 0 else 0.0)
        prev_norm = norm
        total = WavePair(ScalarField2D(medium.grid, total.u.values + residual.u.values),
                         ScalarField2D(medium.grid, total.ut.values + residual.ut.values))
        report.iterates.append(total)
        if truth is not None:
            report.errors_percent.append(relative_error(total.u, truth))
        if progress is not None:
            progress(m, report)
    return report


def reconstruct_source(f: ScalarField2D, medium: Medium, cfg: SolveConfig,
                       variant: Variant, n_terms: int,
                       progress=None) -> ReconstructionReport:
    """Measure a source image and reconstruct it from its own trace,
    recording errors against the source. Convenience wrapper used by the
    experiment harness and the tests.
    """
    h = measure(tat_pair(f, medium), medium, cfg)
    return neumann_series(h, medium, cfg, variant, n_terms, truth=f, progress=progress)


def write_errors_csv(report: ReconstructionReport, path) -> None:
    """Write per-term rows "term,error_percent,contraction_ratio"; the first
    term has no contraction ratio, its cell is left empty.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["term", "error_percent", "contraction_ratio"])
        for m in range(report.n_terms):
            err = repr(report.errors_percent[m]) if m < len(report.errors_percent) else ""
            ratio = repr(report.contraction_ratios[m - 1]) if 1 <= m <= len(report.contraction_ratios) else ""
            writer.writerow([m + 1, err, ratio])
