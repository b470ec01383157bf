"""
:module: spherecl.util.pandas
:purpose:
    Small DataFrame helpers for the tabular outputs of the package:
    optimizer trajectories, convergence studies and kernel-condition grids.
"""
import os
import logging

import numpy as np
import pandas as pd

Logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ['step', 'loss', 'grad_norm']
CONVERGENCE_COLUMNS = ['M', 'mean', 'normalized_mean', 'stderr', 'asymptotic', 'gap']


def trajectory_frame(records):
    """Compose an optimizer trajectory DataFrame

    :param records: sequence of (step, loss, grad_norm) tuples
    :type records: list
    :return: DataFrame with columns step, loss, grad_norm
    :rtype: pandas.DataFrame
    """
    if not isinstance(records, (list, tuple)):
        raise TypeError('records must be type list or tuple')
    df = pd.DataFrame(list(records), columns=TRAJECTORY_COLUMNS)
    df = df.astype({'step': int, 'loss': float, 'grad_norm': float})
    return df


def convergence_frame(rows):
    """Compose a convergence-study DataFrame from a list of row dictionaries
    keyed by :data:`~.CONVERGENCE_COLUMNS`
    """
    if not isinstance(rows, list):
        raise TypeError('rows must be type list')
    for _r in rows:
        missing = [_c for _c in CONVERGENCE_COLUMNS if _c not in _r]
        if missing:
            raise KeyError(f'row is missing columns {missing}')
    df = pd.DataFrame(rows, columns=CONVERGENCE_COLUMNS)
    df = df.astype({'M': int})
    return df


def frame_records(df):
    """Convert a DataFrame into a list of plain-python row dictionaries
    suitable for :func:`json.dumps` (numpy scalars become int/float/bool)

    :param df: table to convert
    :type df: pandas.DataFrame
    :rtype: list of dict
    """
    if not isinstance(df, pd.DataFrame):
        raise TypeError('df must be type pandas.DataFrame')
    out = []
    for _rec in df.to_dict(orient='records'):
        row = {}
        for _k, _v in _rec.items():
            if isinstance(_v, np.generic):
                _v = _v.item()
            row[str(_k)] = _v
        out.append(row)
    return out


def write_csv(df, path):
    """Write **df** to **path** as a header-bearing CSV without the index.
    Parent directories are created as needed.

    :param df: table to write
    :type df: pandas.DataFrame
    :param path: destination file
    :type path: str
    :return: the path written
    :rtype: str
    """
    if not isinstance(df, pd.DataFrame):
        raise TypeError('df must be type pandas.DataFrame')
    if not isinstance(path, str):
        raise TypeError('path must be type str')
    parent = os.path.dirname(path)
    if parent and not os.path.exists(parent):
        os.makedirs(parent)
    df.to_csv(path, index=False, header=True)
    Logger.debug(f'wrote {len(df)} rows to {path}')
    return path
