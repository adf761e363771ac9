"""Figure rendering for experiment reports.

All functions write files and return nothing; they use the Agg backend so
runs work headless. Fields are drawn in physical coordinates with row 0 of
the array at the bottom (y_min), matching the solver convention.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .fields import ScalarField2D


def _extent(field: ScalarField2D):
    g = field.grid
    return (g.x_min, g.x_max, g.y_min, g.y_max)


def save_field_image(field: ScalarField2D, path, title: str = "",
                     cmap: str = "gray", vmin=None, vmax=None) -> None:
    fig, ax = plt.subplots(figsize=(4.2, 4.0))
    im = ax.imshow(field.values, origin="lower", extent=_extent(field),
                   cmap=cmap, vmin=vmin, vmax=vmax)
    fig.colorbar(im, ax=ax, fraction=0.046)
    if title:
        ax.set_title(title)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_field_panel(entries: list[tuple[ScalarField2D, str]], path,
                     cmap: str = "gray", share_range: bool = False) -> None:
    """Row of images, one per (field, title) entry; share_range forces a
    common color scale across the row."""
    n = len(entries)
    fig, axes = plt.subplots(1, n, figsize=(4.0 * n, 4.0))
    if n == 1:
        axes = [axes]
    vmin = vmax = None
    if share_range:
        vmin = min(float(f.values.min()) for f, _ in entries)
        vmax = max(float(f.values.max()) for f, _ in entries)
    for ax, (field, title) in zip(axes, entries):
        im = ax.imshow(field.values, origin="lower", extent=_extent(field),
                       cmap=cmap, vmin=vmin, vmax=vmax)
        ax.set_title(title)
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_error_curve(errors_percent, path, label: str = "") -> None:
    """Relative error (percent, log scale) against the term count."""
    errors = np.asarray(errors_percent, dtype=float)
    terms = np.arange(1, errors.size + 1)
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.semilogy(terms, errors, marker="o", markersize=3, lw=1.2, label=label or None)
    ax.set_xlabel("terms in the series")
    ax.set_ylabel("relative error (%)")
    ax.grid(True, which="both", alpha=0.3)
    if label:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_energy_curve(times, energy, path) -> None:
    """Domain energy over time for a forward run."""
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.plot(np.asarray(times), np.asarray(energy), lw=1.2)
    ax.set_xlabel("t")
    ax.set_ylabel("domain energy")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
