"""
:module: spherecl.util.concurrency
:purpose:
    Worker-count resolution and an input-ordered parallel map. Seeded work is
    split into per-item generators before it reaches these helpers, so the
    outputs do not depend on how many workers run them.
"""
import os, logging, numbers
from concurrent.futures import ThreadPoolExecutor
from multiprocessing import cpu_count

Logger = logging.getLogger(__name__)

THREADS_ENV = 'SPHERE_CL_THREADS'


def _env_cap():
    """Positive SPHERE_CL_THREADS value, or None when unset, zero or invalid"""
    env = os.environ.get(THREADS_ENV, '0').strip() or '0'
    try:
        cap = int(env)
    except ValueError:
        Logger.warning(f'ignoring non-integer {THREADS_ENV}={env!r}')
        return None
    return cap if cap > 0 else None


def resolve_cores(cores=None):
    """Work out how many worker threads to use

    :param cores: requested number of workers. 'all', 0 and None mean every
        available cpu. A positive SPHERE_CL_THREADS caps the result in every
        case. Defaults to None
    :type cores: int, str, or NoneType, optional
    :return: number of workers (>= 1)
    :rtype: int
    """
    cap = _env_cap()
    if cores in (None, 'all', 0) and not isinstance(cores, bool):
        cores = cpu_count()
    if not isinstance(cores, numbers.Integral) or isinstance(cores, bool):
        raise TypeError('cores must be type int, "all", or None')
    if cores < 1:
        raise ValueError(f'cores must be positive, got {cores}')
    if cap is not None and cores > cap:
        Logger.debug(f'capping {cores} workers at {THREADS_ENV}={cap}')
        cores = cap
    return int(cores)


def ordered_map(func, items, cores=1):
    """Apply **func** to every element of **items**, optionally on a thread
    pool, and return the results in input order.

    :param func: callable applied to each item
    :type func: callable
    :param items: items to process
    :type items: iterable
    :param cores: number of worker threads, defaults to 1 (sequential)
    :type cores: int, optional
    :return: list of results aligned with **items**
    :rtype: list
    """
    items = list(items)
    if cores <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(cores, len(items))) as pool:
        return list(pool.map(func, items))
