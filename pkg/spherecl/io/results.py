"""
:module: spherecl.io.results
:purpose:
    Result documents of the ``sphere-cl`` tool. Every document has the same
    top-level keys {command, config_echo, results, wall_time_s, version} and
    is written as sorted, indented, newline-terminated UTF-8 JSON.
"""
import os
import sys
import json
import logging

import numpy as np
import pandas as pd

import spherecl
from spherecl.util.pandas import frame_records

Logger = logging.getLogger(__name__)

DOCUMENT_KEYS = ('command', 'config_echo', 'results', 'wall_time_s', 'version')


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays, DataFrames and objects with
    a ``to_dict`` method into JSON-serializable python objects. Non-finite
    floats become None.
    """
    if hasattr(obj, 'to_dict') and not isinstance(obj, (pd.DataFrame, pd.Series)):
        return to_jsonable(obj.to_dict())
    if isinstance(obj, pd.DataFrame):
        return to_jsonable(frame_records(obj))
    if isinstance(obj, dict):
        return {str(_k): to_jsonable(_v) for _k, _v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(_v) for _v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if np.isfinite(obj) else None
    return obj


def result_document(command, config_echo, results, wall_time_s):
    """Assemble a result document

    :param command: command name
    :type command: str
    :param config_echo: resolved configuration, defaults filled
    :type config_echo: dict
    :param results: command-specific payload
    :type results: dict
    :param wall_time_s: elapsed seconds
    :type wall_time_s: float
    :rtype: dict
    """
    return {'command': command,
            'config_echo': to_jsonable(config_echo),
            'results': to_jsonable(results),
            'wall_time_s': float(wall_time_s),
            'version': spherecl.__version__}


def dumps_document(doc):
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + '\n'


def write_document(doc, path):
    """Write **doc** to **path**, or to stdout when **path** is '-'

    :return: the path written
    :rtype: str
    """
    text = dumps_document(doc)
    if path == '-':
        sys.stdout.write(text)
        return path
    parent = os.path.dirname(path)
    if parent and not os.path.exists(parent):
        os.makedirs(parent)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(text)
    Logger.info(f'wrote {doc["command"]} results to {path}')
    return path


def read_document(path):
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)
