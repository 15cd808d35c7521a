"""
Static SVG figures: law curves over a log-scale batch size axis, grid-search
runs as a scatter colored by final loss with the per-batch-size optimal
learning rates highlighted, and the curves implied by a scaling fit with a
b_noise marker.

SVG output is made reproducible by fixing the hash salt and dropping the
date from the metadata.
"""
import logging

import matplotlib
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.colors import LogNorm
from matplotlib.figure import Figure
import numpy as np

from harness import NoConvergedRunsError, optimal_points
from lawcore import sgd_lr, surge_lr
from models import ScalingFit


log = logging.getLogger(__name__)

SVG_RC = {'svg.hashsalt': 'surge', 'svg.fonttype': 'none',
          'font.size': 10, 'grid.linestyle': '--', 'grid.alpha': 0.3}


def _fit_curves(fit:ScalingFit, B:np.ndarray) -> list:
    curves = [('surge (fit)', surge_lr(B, fit.b_noise, fit.eps_max_adam))]
    for alpha in sorted(fit.eps_max_sgd):
        curves.append((f'sgd alpha={alpha:g} (fit)',
                       sgd_lr(B, fit.b_noise, fit.eps_max_sgd[alpha], alpha)))
    return curves


def _batch_range(curves:list, records:list, fit:ScalingFit|None) -> tuple:
    values = [b for c in curves for b in c.batch_sizes()]
    values += [r.batch_size for r in records]
    if fit is not None:
        values.append(fit.b_noise)
    return min(values) / 2, max(values) * 2


def render_svg(curves:list|None=None, records:list|None=None,
               fit:ScalingFit|None=None,
               title:str='optimal learning rate vs batch size') -> Figure:
    curves, records = curves or [], records or []
    if not curves and not records and fit is None:
        raise ValueError('nothing to plot: no curves, runs or fit given')

    with matplotlib.rc_context(SVG_RC):
        fig = Figure(figsize=(8, 5))
        FigureCanvasSVG(fig)
        ax = fig.add_subplot()
        positive = True

        converged = [r for r in records if r.converged]
        if converged:
            losses = np.array([r.final_loss for r in converged])
            norm = LogNorm() if np.all(losses > 0) else None
            points = ax.scatter([r.batch_size for r in converged],
                                [r.lr for r in converged], c=losses,
                                norm=norm, cmap='viridis', s=14, alpha=0.7)
            fig.colorbar(points, ax=ax, label='final loss')
        elif records:
            log.warning('no converged runs to plot')
        if records:
            try:
                optima = optimal_points(records)
                ax.plot([p.batch_size for p in optima], [p.lr for p in optima],
                        'r*-', markersize=10, label='empirical optimum')
            except NoConvergedRunsError:
                pass

        for curve in curves:
            ax.plot(curve.batch_sizes(), curve.values(), label=curve.label)
            positive &= bool(np.all(curve.values() > 0))

        if fit is not None:
            lo, hi = _batch_range(curves, records, fit)
            B = np.geomspace(lo, hi, 200)
            for label, values in _fit_curves(fit, B):
                ax.plot(B, values, '--', label=label)
            ax.axvline(fit.b_noise, color='grey', linestyle=':',
                       label=f'b_noise = {fit.b_noise:.4g}')

        ax.set_xscale('log')
        if positive:
            ax.set_yscale('log')
        ax.set_xlabel('batch size B')
        ax.set_ylabel('learning rate')
        ax.set_title(title)
        ax.grid(True, which='both')
        if ax.get_legend_handles_labels()[0]:
            ax.legend(fontsize=8)
        return fig


def write_svg(fig:Figure, filepath:str) -> None:
    with matplotlib.rc_context(SVG_RC):
        fig.savefig(filepath, format='svg', bbox_inches='tight',
                    metadata={'Date': None})
