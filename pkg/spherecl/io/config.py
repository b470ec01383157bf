"""
:module: spherecl.io.config
:purpose:
    Strict parsing of experiment configuration documents for the
    ``sphere-cl`` command line tool. A configuration is a single JSON object;
    unknown keys, missing per-command keys and invalid values all raise
    :class:`~spherecl.util.errors.ConfigError`.

    :meth:`~.ExperimentConfig.to_dict` fills every default so that the echo
    stored in a result document reruns to the same results.
"""
import json
import logging
from dataclasses import dataclass, field, fields

from spherecl.core.geometry import EmbeddingBatch
from spherecl.core.kernels import KernelSpec
from spherecl.core.losses import LossSpec
from spherecl.process.optimize import OptimizerConfig
from spherecl.process.sampling import SphereDistribution
from spherecl.util.errors import ConfigError

Logger = logging.getLogger(__name__)

COMMANDS = ('loss-eval', 'grad-check', 'optimize', 'verify-theorems',
            'expectation', 'convergence', 'metrics', 'kernel-check')

# keys every command must have (beyond "command")
REQUIRED = {'loss-eval': ('loss',),
            'grad-check': ('loss',),
            'optimize': ('loss', 'M', 'd'),
            'verify-theorems': ('loss', 'd'),
            'expectation': ('loss', 'distribution', 'M'),
            'convergence': ('loss', 'distribution', 'M_list'),
            'metrics': (),
            'kernel-check': ('kernel',)}

# commands that take embeddings inline or sample M of them
EMBEDDING_COMMANDS = ('loss-eval', 'grad-check', 'metrics')


def _int(name, value, minimum=None):
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f'"{name}" must be an integer, got {value!r}')
    if minimum is not None and value < minimum:
        raise ConfigError(f'"{name}" must be >= {minimum}, got {value}')
    return value


def _real(name, value, positive=True):
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f'"{name}" must be a number, got {value!r}')
    if positive and not value > 0:
        raise ConfigError(f'"{name}" must be positive, got {value}')
    return float(value)


def _path(name, value, nullable=False):
    if value is None and nullable:
        return None
    if not isinstance(value, str) or not value:
        raise ConfigError(f'"{name}" must be a non-empty string')
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    """One run of the command line tool"""
    command: str
    seed: int = 0
    output_path: str = 'results.json'
    loss: LossSpec = None
    distribution: SphereDistribution = None
    embeddings: dict = None
    optimizer: OptimizerConfig = None
    M: int = None
    d: int = None
    M_list: list = None
    n_batches: int = 400
    n_samples: int = 10000
    h: float = 1e-6
    t: float = 2.
    n_ref: int = 100000
    tol: float = 1e-3
    cross_polytope: bool = False
    kernel: KernelSpec = None
    grid_size: int = 256
    trajectory_path: str = None
    table_path: str = None
    # optimizer.seed was given explicitly rather than inherited from "seed"
    optimizer_seed_pinned: bool = field(default=False, compare=False, repr=False)

    @property
    def batches(self):
        """Inline embeddings as (U, V) EmbeddingBatch objects, or None"""
        if self.embeddings is None:
            return None
        return EmbeddingBatch(self.embeddings['U']), EmbeddingBatch(self.embeddings['V'])

    @classmethod
    def from_dict(cls, data):
        """Validate a configuration document

        :param data: parsed JSON object
        :type data: dict
        :raises ConfigError: on any schema or value violation
        :rtype: spherecl.io.config.ExperimentConfig
        """
        if not isinstance(data, dict):
            raise ConfigError('configuration must be a JSON object')
        known = {_f.name for _f in fields(cls)} - {'optimizer_seed_pinned'}
        extra = set(data) - known
        if extra:
            raise ConfigError(f'unknown configuration keys {sorted(extra)}')
        command = data.get('command')
        if command not in COMMANDS:
            raise ConfigError(f'"command" must be one of {list(COMMANDS)}, got {command!r}')
        missing = [_k for _k in REQUIRED[command] if data.get(_k) is None]
        if command == 'verify-theorems' and not data.get('cross_polytope', False) and data.get('M') is None:
            missing.append('M')
        if command in EMBEDDING_COMMANDS and data.get('embeddings') is None:
            for _k in ('M', 'd'):
                if data.get(_k) is None and not (_k == 'd' and data.get('distribution') is not None):
                    missing.append(_k)
        if missing:
            raise ConfigError(f'command "{command}" requires {sorted(set(missing))}')

        kw = {'command': command}
        try:
            kw['seed'] = _int('seed', data.get('seed', 0))
            kw['output_path'] = _path('output_path', data.get('output_path', 'results.json'))
            if data.get('loss') is not None:
                kw['loss'] = LossSpec.from_dict(data['loss'])
            if data.get('distribution') is not None:
                kw['distribution'] = SphereDistribution.from_dict(data['distribution'])
            if data.get('kernel') is not None:
                kw['kernel'] = KernelSpec.from_dict(data['kernel'])
            opt = data.get('optimizer')
            if opt is not None:
                opt = dict(opt) if isinstance(opt, dict) else opt
                if isinstance(opt, dict):
                    kw['optimizer_seed_pinned'] = 'seed' in opt
                    opt.setdefault('seed', kw['seed'])
                kw['optimizer'] = OptimizerConfig.from_dict(opt)
            elif command in ('optimize', 'verify-theorems'):
                kw['optimizer'] = OptimizerConfig(seed=kw['seed'])
        except ConfigError:
            raise
        except (ValueError, TypeError) as e:
            raise ConfigError(str(e)) from e

        for _k in ('M', 'd'):
            if data.get(_k) is not None:
                kw[_k] = _int(_k, data[_k], minimum=1)
        if kw.get('M') is not None and command != 'kernel-check' and kw['M'] < 2:
            raise ConfigError(f'"M" must be >= 2, got {kw["M"]}')
        if 'distribution' in kw:
            if kw.get('d') is None:
                kw['d'] = kw['distribution'].d
            elif kw['d'] != kw['distribution'].d:
                raise ConfigError(f'"d" ({kw["d"]}) disagrees with distribution.d ({kw["distribution"].d})')
        if data.get('M_list') is not None:
            if not isinstance(data['M_list'], list) or not data['M_list']:
                raise ConfigError('"M_list" must be a non-empty list of integers')
            kw['M_list'] = [_int('M_list', _m, minimum=2) for _m in data['M_list']]
            if any(_b <= _a for _a, _b in zip(kw['M_list'][:-1], kw['M_list'][1:])):
                raise ConfigError('"M_list" must be strictly increasing')
        kw['n_batches'] = _int('n_batches', data.get('n_batches', 400), minimum=30)
        kw['n_samples'] = _int('n_samples', data.get('n_samples', 10000), minimum=1000)
        kw['n_ref'] = _int('n_ref', data.get('n_ref', 100000), minimum=1000)
        kw['grid_size'] = _int('grid_size', data.get('grid_size', 256), minimum=8)
        kw['h'] = _real('h', data.get('h', 1e-6))
        if not 1e-8 <= kw['h'] <= 1e-3:
            raise ConfigError(f'"h" must lie in [1e-8, 1e-3], got {kw["h"]}')
        kw['t'] = _real('t', data.get('t', 2.))
        kw['tol'] = _real('tol', data.get('tol', 1e-3))
        cp = data.get('cross_polytope', False)
        if not isinstance(cp, bool):
            raise ConfigError('"cross_polytope" must be true or false')
        kw['cross_polytope'] = cp
        if cp and kw.get('M') is not None and kw.get('d') is not None and kw['M'] != 2 * kw['d']:
            raise ConfigError(f'cross-polytope runs use M = 2d, got M={kw["M"]}, d={kw["d"]}')
        kw['trajectory_path'] = _path('trajectory_path', data.get('trajectory_path'), nullable=True)
        kw['table_path'] = _path('table_path', data.get('table_path'), nullable=True)

        emb = data.get('embeddings')
        if emb is not None:
            kw['embeddings'] = cls._parse_embeddings(emb, kw)
        return cls(**kw)

    @staticmethod
    def _parse_embeddings(emb, kw):
        if not isinstance(emb, dict) or set(emb) != {'U', 'V'}:
            raise ConfigError('"embeddings" must be an object with exactly the keys "U" and "V"')
        try:
            U, V = EmbeddingBatch(emb['U']), EmbeddingBatch(emb['V'])
        except (ValueError, TypeError) as e:
            raise ConfigError(f'invalid embeddings: {e}') from e
        if U.points.shape != V.points.shape:
            raise ConfigError(f'embeddings U and V differ in shape: {U.points.shape} != {V.points.shape}')
        for _k, _v in (('M', U.M), ('d', U.d)):
            if kw.get(_k) is not None and kw[_k] != _v:
                raise ConfigError(f'"{_k}" ({kw[_k]}) disagrees with the embeddings ({_v})')
            kw[_k] = _v
        return {'U': U.tolist(), 'V': V.tolist()}

    def to_dict(self):
        """Full configuration with every default filled. An optimizer seed
        inherited from "seed" is left out so that a rerun under a new
        "seed" re-derives it."""
        out = {}
        for _f in fields(self):
            if _f.name == 'optimizer_seed_pinned':
                continue
            _v = getattr(self, _f.name)
            if hasattr(_v, 'to_dict'):
                _v = _v.to_dict()
            elif isinstance(_v, list):
                _v = list(_v)
            out[_f.name] = _v
        if self.optimizer is not None and not self.optimizer_seed_pinned:
            out['optimizer'].pop('seed')
        return out


def load_config(path, seed=None, output_path=None):
    """Read and validate a configuration file, applying command line overrides

    :param path: JSON configuration file
    :type path: str
    :param seed: overrides the "seed" key, defaults to None
    :type seed: int, optional
    :param output_path: overrides the "output_path" key, defaults to None
    :type output_path: str, optional
    :raises ConfigError: if the file cannot be read or fails validation
    :rtype: spherecl.io.config.ExperimentConfig
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f'cannot read {path}: {e}') from e
    except json.JSONDecodeError as e:
        raise ConfigError(f'{path} is not valid JSON: {e}') from e
    if not isinstance(data, dict):
        raise ConfigError('configuration must be a JSON object')
    if seed is not None:
        data['seed'] = seed
    if output_path is not None:
        data['output_path'] = output_path
    Logger.debug(f'loaded configuration for "{data.get("command")}" from {path}')
    return ExperimentConfig.from_dict(data)
