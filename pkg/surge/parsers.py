"""
Parsers for everything the command line reads:
- AxisParser: PEG parser for batch size / learning rate axes
  ("4, 8, 16", "1e-4:1e-3:1e-4" or "log(4, 512, 8)")
- VariantParser: PEG parser for law variant lists
  ("exact, surge, sgd(0.5), linear")
- ModelFileParser, WorkloadFileParser, GridFileParser: JSON config loaders
- RunRecordReader, CurveReader: the CSV files written by the writers module

Every malformed input raises ConfigError naming the offending field, e.g.
"grid.batch_sizes[2]".
"""
import csv
import json
import math

import numpy as np
from parsimonious.exceptions import ParseError
from parsimonious.grammar import Grammar
from parsimonious.grammar import NodeVisitor
from parsimonious.nodes import Node

from models import GradientStats, GridConfig, HessianSpec, LawCurve, \
    LawInputs, OptimizerConfig, RunRecord, ScalingFit
from workloads import BlobDataset, MlpWorkload, QuadraticWorkload


# axis values are rounded to this many significant digits
AXIS_DIGITS = 12

RUN_COLUMNS = ['batch_size', 'lr', 'seed', 'converged', 'S', 'E',
               'final_loss']
CURVE_COLUMNS = ['variant', 'B', 'value']

_MISSING = object()


class ConfigError(ValueError):
    pass


def _round(value:float) -> float:
    return float(f'{value:.{AXIS_DIGITS}g}')


class AxisParser:
    """
    Parses an axis expression into a list of floats. A range is
    start:stop:step with stop included when it lies within half a step of
    the last point; log(a, b, n) gives n log-spaced points from a to b.
    """
    GRAMMAR = r"""
        AXIS = WS? (LOG_RANGE / RANGE / LIST) WS?

        LOG_RANGE = "log" WS? "(" WS? NR WS? "," WS? NR WS? "," WS? NR WS? ")"
        RANGE     = NR WS? ":" WS? NR WS? ":" WS? NR
        LIST      = NR (WS? "," WS? NR)*

        WS = ~r"\s+"
        NR = ~r"[+\-]?(?:0|[1-9]\d*)(?:\.\d*)?(?:[eE][+\-]?\d+)?"
    """
    def __init__(self) -> None:
        self.grammar = Grammar(self.GRAMMAR)

    def parse(self, txt:str, field:str='axis') -> list:
        try:
            tree = self.grammar.parse(txt)
        except ParseError:
            raise ConfigError(f'{field}: cannot parse axis "{txt}"') from None
        visitor = self.AxisVisitor(field)
        return visitor.visit(tree)

    class AxisVisitor(NodeVisitor):
        unwrapped_exceptions = (ConfigError,)

        def __init__(self, field:str) -> None:
            self.field = field

        def visit_AXIS(self, _, visited_children:list) -> list:
            # WS? (LOG_RANGE / RANGE / LIST) WS?
            _, axis, _ = visited_children
            return axis[0]

        def visit_LOG_RANGE(self, _, visited_children:list) -> list:
            # "log" WS? "(" WS? NR WS? "," WS? NR WS? "," WS? NR WS? ")"
            start, stop, n = visited_children[4], visited_children[8], \
                visited_children[12]
            if not (0 < start < stop):
                raise ConfigError(f'{self.field}: log range needs '
                                  f'0 < start < stop')
            if not (n.is_integer() and n >= 2):
                raise ConfigError(f'{self.field}: log range needs an integer '
                                  f'point count >= 2')
            return [_round(v) for v in np.geomspace(start, stop, int(n))]

        def visit_RANGE(self, _, visited_children:list) -> list:
            # NR WS? ":" WS? NR WS? ":" WS? NR
            start, stop, step = visited_children[0], visited_children[4], \
                visited_children[8]
            if not (step > 0 and stop >= start):
                raise ConfigError(f'{self.field}: range needs step > 0 and '
                                  f'stop >= start')
            n = math.floor((stop - start) / step + 0.5) + 1
            return [_round(start + i * step) for i in range(n)]

        def visit_LIST(self, _, visited_children:list) -> list:
            # NR (WS? "," WS? NR)*
            first, rest = visited_children
            values = [first]
            if not isinstance(rest, Node):
                values.extend(item[3] for item in rest)
            return values

        def visit_NR(self, node:Node, _) -> float:
            return float(node.text)

        def generic_visit(self, node:Node, visited_children:list) -> list|Node:
            return visited_children or node


class VariantParser:
    """
    Parses a comma separated list of law variants into (variant, alpha)
    tuples. sgd(a) and sgd_alpha(a) both name the sgd_alpha variant.
    """
    GRAMMAR = r"""
        VARIANTS = WS? VARIANT (WS? "," WS? VARIANT)* WS?

        VARIANT = SGD / NAME
        SGD     = ("sgd_alpha" / "sgd") WS? "(" WS? NR WS? ")"
        NAME    = "exact" / "surge" / "linear" / "sqrt" / "large_batch" / "loss_improvement"

        WS = ~r"\s+"
        NR = ~r"[+\-]?(?:0|[1-9]\d*)(?:\.\d*)?(?:[eE][+\-]?\d+)?"
    """
    def __init__(self) -> None:
        self.grammar = Grammar(self.GRAMMAR)

    def parse(self, txt:str, field:str='variants') -> list:
        if not txt.strip():
            raise ConfigError(f'{field}: empty variant list')
        try:
            tree = self.grammar.parse(txt)
        except ParseError:
            raise ConfigError(f'{field}: cannot parse variants "{txt}"') \
                from None
        return self.VariantVisitor(field).visit(tree)

    class VariantVisitor(NodeVisitor):
        unwrapped_exceptions = (ConfigError,)

        def __init__(self, field:str) -> None:
            self.field = field

        def visit_VARIANTS(self, _, visited_children:list) -> list:
            # WS? VARIANT (WS? "," WS? VARIANT)* WS?
            _, first, rest, _ = visited_children
            variants = [first]
            if not isinstance(rest, Node):
                variants.extend(item[3] for item in rest)
            return variants

        def visit_VARIANT(self, _, visited_children:list) -> tuple:
            return visited_children[0]

        def visit_SGD(self, _, visited_children:list) -> tuple:
            # ("sgd_alpha" / "sgd") WS? "(" WS? NR WS? ")"
            alpha = visited_children[4]
            if not alpha > 0:
                raise ConfigError(f'{self.field}: sgd alpha must be > 0')
            return 'sgd_alpha', alpha

        def visit_NAME(self, node:Node, _) -> tuple:
            return node.text, None

        def visit_NR(self, node:Node, _) -> float:
            return float(node.text)

        def generic_visit(self, node:Node, visited_children:list) -> list|Node:
            return visited_children or node


def parse_axis(value, field:str, integer:bool=False) -> list:
    """
    An axis from a JSON list or an axis expression, strictly increasing.
    Integer axes (batch sizes) are then rounded to positive integers;
    values that round to the same integer collapse into one.
    """
    if isinstance(value, str):
        values = AxisParser().parse(value, field)
    elif isinstance(value, list) and value:
        values = []
        for i, item in enumerate(value):
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                raise ConfigError(f'{field}[{i}]: expected a number, '
                                  f'got {item!r}')
            values.append(float(item))
    else:
        raise ConfigError(f'{field}: expected a non-empty list or an axis '
                          f'expression')

    for i, v in enumerate(values):
        if not (math.isfinite(v) and v > 0):
            raise ConfigError(f'{field}[{i}]: must be > 0, got {v}')
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError(f'{field}: values must be strictly increasing')
    if integer:
        return sorted({max(1, int(round(v))) for v in values})
    return values


def _load_json(filepath:str, field:str) -> dict:
    try:
        with open(filepath) as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f'{field}: cannot read {filepath}: '
                          f'{e.strerror}') from None
    except json.JSONDecodeError as e:
        raise ConfigError(f'{field}: invalid JSON in {filepath} '
                          f'(line {e.lineno}): {e.msg}') from None
    if not isinstance(data, dict):
        raise ConfigError(f'{field}: expected a JSON object')
    return data


def _get(data:dict, key:str, path:str, types:tuple, default=_MISSING):
    if key not in data:
        if default is _MISSING:
            raise ConfigError(f'{path}.{key}: missing')
        return default
    value = data[key]
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(f'{path}.{key}: unexpected boolean')
    if not isinstance(value, types):
        names = '/'.join(t.__name__ for t in types)
        raise ConfigError(f'{path}.{key}: expected {names}, got {value!r}')
    return value


def _vector(value, field:str, dim:int|None) -> np.ndarray:
    """
    A list of numbers, or a scalar broadcast to dim coordinates.
    """
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if dim is None:
            raise ConfigError(f'{field}: a scalar needs a known dimension')
        return np.full(dim, float(value))
    if not isinstance(value, list) or not value:
        raise ConfigError(f'{field}: expected a number or a non-empty list')
    for i, item in enumerate(value):
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise ConfigError(f'{field}[{i}]: expected a number, '
                              f'got {item!r}')
    if dim is not None and len(value) != dim:
        raise ConfigError(f'{field}: expected {dim} values, '
                          f'got {len(value)}')
    return np.array(value, dtype=np.float64)


def parse_hessian(data:dict, path:str) -> HessianSpec:
    if not isinstance(data, dict):
        raise ConfigError(f'{path}: expected an object')
    kind = _get(data, 'kind', path, (str,))
    try:
        if kind == 'dense':
            matrix = _get(data, 'matrix', path, (list,))
            return HessianSpec.dense(matrix)
        if kind == 'diagonal':
            return HessianSpec.diagonal(
                _vector(_get(data, 'values', path, (list,)),
                        f'{path}.values', None))
        if kind == 'uniform':
            return HessianSpec.uniform(
                _get(data, 'diag', path, (int, float)),
                _get(data, 'offdiag', path, (int, float)),
                _get(data, 'dim', path, (int,)))
    except (ValueError, TypeError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f'{path}: {e}') from None
    raise ConfigError(f'{path}.kind: unknown hessian kind "{kind}"')


class ModelFileParser:
    """
    Law model files: {"mu": ..., "sigma": ..., "hessian": {...}}. mu and
    sigma may be scalars, broadcast to the Hessian's dimension.
    """
    def parse_file(self, filepath:str) -> LawInputs:
        return self.parse(_load_json(filepath, 'model'))

    def parse(self, data:dict, path:str='model') -> LawInputs:
        hessian = parse_hessian(_get(data, 'hessian', path, (dict,)),
                                f'{path}.hessian')
        mu = _vector(_get(data, 'mu', path, (int, float, list)),
                     f'{path}.mu', hessian.dim)
        sigma = _vector(_get(data, 'sigma', path, (int, float, list)),
                        f'{path}.sigma', hessian.dim)
        try:
            return LawInputs(GradientStats(mu, sigma), hessian)
        except ValueError as e:
            raise ConfigError(f'{path}: {e}') from None


class WorkloadFileParser:
    """
    Workload files. Quadratic:
        {"kind": "quadratic", "hessian": {...}, "theta_star": 0,
         "noise_sigma": 1, "rng_seed": 0, "theta_init": {"gradient": 0.1}}
    theta_init is optional; a list gives the start point itself, an object
    {"gradient": g} starts where the true gradient equals g.
    MLP:
        {"kind": "mlp", "dataset": {...}, "hidden": 16, "init_seed": 0,
         "init_scale": 1.0}
    """
    def parse_file(self, filepath:str):
        return self.parse(_load_json(filepath, 'workload'))

    def parse(self, data:dict, path:str='workload'):
        kind = _get(data, 'kind', path, (str,))
        try:
            if kind == 'quadratic':
                return self._parse_quadratic(data, path)
            if kind == 'mlp':
                return self._parse_mlp(data, path)
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f'{path}: {e}') from None
        raise ConfigError(f'{path}.kind: unknown workload kind "{kind}"')

    def _parse_quadratic(self, data:dict, path:str) -> QuadraticWorkload:
        hessian = parse_hessian(_get(data, 'hessian', path, (dict,)),
                                f'{path}.hessian')
        d = hessian.dim
        theta_star = _vector(_get(data, 'theta_star', path,
                                  (int, float, list), 0.0),
                             f'{path}.theta_star', d)
        noise = _vector(_get(data, 'noise_sigma', path, (int, float, list)),
                        f'{path}.noise_sigma', d)
        workload = QuadraticWorkload(hessian, theta_star, noise,
                                     _get(data, 'rng_seed', path, (int,), 0))
        theta_init = _get(data, 'theta_init', path, (list, dict), None)
        if isinstance(theta_init, dict):
            gradient = _vector(_get(theta_init, 'gradient',
                                    f'{path}.theta_init',
                                    (int, float, list)),
                               f'{path}.theta_init.gradient', d)
            workload.theta_init = workload.theta_for_gradient(gradient)
        elif theta_init is not None:
            workload.theta_init = _vector(theta_init, f'{path}.theta_init', d)
        return workload

    def _parse_mlp(self, data:dict, path:str) -> MlpWorkload:
        ds = _get(data, 'dataset', path, (dict,), {})
        ds_path = f'{path}.dataset'
        dataset = BlobDataset(
            n_samples=_get(ds, 'n_samples', ds_path, (int,), 2000),
            n_classes=_get(ds, 'n_classes', ds_path, (int,), 4),
            input_dim=_get(ds, 'input_dim', ds_path, (int,), 2),
            std=_get(ds, 'std', ds_path, (int, float), 0.5),
            seed=_get(ds, 'seed', ds_path, (int,), 0),
            centers=_get(ds, 'centers', ds_path, (list,), None))
        return MlpWorkload(dataset,
                           hidden=_get(data, 'hidden', path, (int,), 16),
                           init_seed=_get(data, 'init_seed', path, (int,), 0),
                           init_scale=_get(data, 'init_scale', path,
                                           (int, float), 1.0))


class GridFileParser:
    def parse_file(self, filepath:str) -> GridConfig:
        return self.parse(_load_json(filepath, 'grid'))

    def parse(self, data:dict, path:str='grid') -> GridConfig:
        opt = _get(data, 'optimizer', path, (dict,), {})
        opt_path = f'{path}.optimizer'
        try:
            optimizer = OptimizerConfig(
                kind=_get(opt, 'kind', opt_path, (str,), 'adam'),
                beta1=_get(opt, 'beta1', opt_path, (int, float), 0.9),
                beta2=_get(opt, 'beta2', opt_path, (int, float), 0.999),
                eps_adam=_get(opt, 'eps_adam', opt_path, (int, float), 1e-8))
        except ValueError as e:
            raise ConfigError(f'{opt_path}: {e}') from None

        batch_sizes = parse_axis(_get(data, 'batch_sizes', path, (list, str)),
                                 f'{path}.batch_sizes', integer=True)
        lrs = parse_axis(_get(data, 'lrs', path, (list, str)), f'{path}.lrs')
        try:
            return GridConfig(
                optimizer=optimizer, batch_sizes=batch_sizes, lrs=lrs,
                rounds=_get(data, 'rounds', path, (int,)),
                target_loss=float(_get(data, 'target_loss', path,
                                       (int, float))),
                extra_steps=_get(data, 'extra_steps', path, (int,), 50),
                max_steps=_get(data, 'max_steps', path, (int,), 10000),
                seed=_get(data, 'seed', path, (int,), 0),
                target_rtol=float(_get(data, 'target_rtol', path,
                                       (int, float), 1e-9)),
                workload=_get(data, 'workload', path, (str,), None))
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f'{path}: {e}') from None


def _parse_bool(txt:str, field:str) -> bool:
    if txt == 'true':
        return True
    if txt == 'false':
        return False
    raise ConfigError(f'{field}: expected true or false, got "{txt}"')


def _parse_optional(txt:str, convert, field:str):
    if txt == '':
        return None
    try:
        return convert(txt)
    except ValueError:
        raise ConfigError(f'{field}: cannot parse "{txt}"') from None


def _read_rows(filepath:str, columns:list, field:str) -> list:
    try:
        with open(filepath, newline='') as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header != columns:
                raise ConfigError(f'{field}: expected header '
                                  f'{",".join(columns)}, got {header}')
            rows = [row for row in reader if row]
    except OSError as e:
        raise ConfigError(f'{field}: cannot read {filepath}: '
                          f'{e.strerror}') from None
    if not rows:
        raise ConfigError(f'{field}: {filepath} has no data rows')
    for i, row in enumerate(rows, start=1):
        if len(row) != len(columns):
            raise ConfigError(f'{field}[{i}]: expected {len(columns)} '
                              f'columns, got {len(row)}')
    return rows


class RunRecordReader:
    def read_file(self, filepath:str) -> list:
        records = []
        for i, row in enumerate(_read_rows(filepath, RUN_COLUMNS, 'runs'),
                                start=1):
            field = f'runs[{i}]'
            batch_size, lr, seed, converged, S, E, final_loss = row
            try:
                records.append(RunRecord(
                    batch_size=int(batch_size), lr=float(lr), seed=int(seed),
                    converged=_parse_bool(converged, f'{field}.converged'),
                    S=_parse_optional(S, int, f'{field}.S'),
                    E=_parse_optional(E, int, f'{field}.E'),
                    final_loss=_parse_optional(final_loss, float,
                                               f'{field}.final_loss')))
            except ValueError as e:
                if isinstance(e, ConfigError):
                    raise
                raise ConfigError(f'{field}: {e}') from None
        return records


class CurveReader:
    """
    Reads a curve CSV back into LawCurves, one per variant label, in order
    of first appearance.
    """
    def __init__(self) -> None:
        self.variant_parser = VariantParser()

    def read_file(self, filepath:str) -> list:
        points = {}
        for i, (label, B, value) in enumerate(
                _read_rows(filepath, CURVE_COLUMNS, 'curves'), start=1):
            field = f'curves[{i}]'
            if label not in points:
                points[label] = []
            points[label].append((_parse_optional(B, float, f'{field}.B'),
                                  _parse_optional(value, float,
                                                  f'{field}.value')))
        curves = []
        for label, pts in points.items():
            parsed = self.variant_parser.parse(label, f'curves.{label}')
            if len(parsed) != 1:
                raise ConfigError(f'curves.{label}: expected one variant')
            variant, alpha = parsed[0]
            try:
                curves.append(LawCurve(variant, pts, alpha))
            except (ValueError, TypeError) as e:
                raise ConfigError(f'curves.{label}: {e}') from None
        return curves


class FitFileParser:
    """
    Reads the JSON written by FitWriter back into a ScalingFit.
    """
    SGD_KEYS = {'eps_max_sgd_05': 0.5, 'eps_max_sgd_10': 1.0}

    def parse_file(self, filepath:str) -> ScalingFit:
        return self.parse(_load_json(filepath, 'fit'))

    def parse(self, data:dict, path:str='fit') -> ScalingFit:
        values = {key: float(_get(data, key, path, (int, float)))
                  for key in ('b_noise', 's_min', 'e_min', 'eps_max_adam')}
        if not all(v > 0 for v in values.values()):
            raise ConfigError(f'{path}: b_noise, s_min, e_min and '
                              f'eps_max_adam must be > 0')
        eps_max_sgd = {alpha: float(_get(data, key, path, (int, float)))
                       for key, alpha in self.SGD_KEYS.items() if key in data}
        target = _get(data, 'target_loss', path, (int, float, type(None)),
                      None)
        return ScalingFit(
            eps_max_sgd=eps_max_sgd,
            residual_rms=float(_get(data, 'residual_rms', path,
                                    (int, float), 0.0)),
            n_points=_get(data, 'n_points', path, (int,), 0),
            target_loss=None if target is None else float(target),
            **values)
