"""
Writers for the CSV, JSON and text outputs. Output is byte-deterministic:
floats use the shortest repr that round-trips, rows follow the order they
are given in, and newlines are always \n.
"""
import json
import math

from models import ScalingFit
from parsers import CURVE_COLUMNS, RUN_COLUMNS


def format_number(value:int|float|None) -> str:
    """
    '' for None, 'inf'/'-inf' for infinities, str for ints and the shortest
    round-trip repr for floats.
    """
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, int):
        return str(value)
    value = float(value)
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return repr(value)


class _Writer:
    def __init__(self) -> None:
        self.nl = '\n'

    def write_to_file(self, data, filepath:str) -> None:
        with open(filepath, 'w', newline=self.nl) as f:
            f.write(self.to_string(data))

    def to_string(self, data) -> str:
        raise NotImplementedError


class RunRecordWriter(_Writer):
    """
    Run records as CSV with header batch_size,lr,seed,converged,S,E,
    final_loss. converged is true/false, S and E are empty for runs that
    never reached the target, final_loss is inf for diverged runs.
    """
    def to_string(self, records:list) -> str:
        lines = [','.join(RUN_COLUMNS)]
        for r in records:
            lines.append(','.join(format_number(v) for v in
                                  (r.batch_size, r.lr, r.seed, r.converged,
                                   r.S, r.E, r.final_loss)))
        return self.nl.join(lines) + self.nl


class CurveWriter(_Writer):
    def to_string(self, curves:list) -> str:
        lines = [','.join(CURVE_COLUMNS)]
        for curve in curves:
            for B, value in curve.points:
                lines.append(f'{curve.label},{format_number(B)},'
                             f'{format_number(value)}')
        return self.nl.join(lines) + self.nl


def _sgd_key(alpha:float) -> str:
    return 'eps_max_sgd_' + f'{alpha:.1f}'.replace('.', '')


class FitWriter(_Writer):
    """
    ScalingFit as JSON. Per-alpha sgd estimates are flattened into keys
    eps_max_sgd_05 (alpha 0.5) and eps_max_sgd_10 (alpha 1.0).
    """
    def to_dict(self, fit:ScalingFit) -> dict:
        data = {'b_noise': fit.b_noise, 's_min': fit.s_min,
                'e_min': fit.e_min, 'eps_max_adam': fit.eps_max_adam}
        for alpha in sorted(fit.eps_max_sgd):
            data[_sgd_key(alpha)] = fit.eps_max_sgd[alpha]
        data['residual_rms'] = fit.residual_rms
        data['n_points'] = fit.n_points
        data['target_loss'] = fit.target_loss
        return data

    def to_string(self, fit:ScalingFit) -> str:
        return json.dumps(self.to_dict(fit), indent=2) + self.nl


class ReportWriter(_Writer):
    """
    Plain text pass/fail table of verification results.
    """
    def to_string(self, results:list) -> str:
        width = max([len(r.name) for r in results] + [5])
        lines = [f'{"check":<{width}}  status  {"measured":>12}  '
                 f'{"expected":>12}  tolerance']
        for r in results:
            status = 'pass' if r.passed else 'FAIL'
            lines.append(f'{r.name:<{width}}  {status:<6}  '
                         f'{float(r.measured):>12.6g}  '
                         f'{float(r.expected):>12.6g}  {r.tolerance}')
        n_passed = sum(r.passed for r in results)
        lines.append(f'{n_passed}/{len(results)} checks passed')
        return self.nl.join(lines) + self.nl
