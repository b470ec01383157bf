import os
import shutil
import logging
import tempfile
from unittest import TestCase, mock
from multiprocessing import cpu_count

import numpy as np
import pandas as pd

from spherecl.util.concurrency import THREADS_ENV, resolve_cores, ordered_map
from spherecl.util.errors import BatchEvaluationError, ConfigError
from spherecl.util.logging import rich_error_message, setup_terminal_logger
from spherecl.util.pandas import (
    trajectory_frame, convergence_frame, frame_records, write_csv, CONVERGENCE_COLUMNS)


class TestConcurrency(TestCase):
    def test_resolve_cores(self):
        with mock.patch.dict(os.environ, {THREADS_ENV: '3'}):
            self.assertEqual(resolve_cores(), min(3, cpu_count()))
            self.assertEqual(resolve_cores('all'), min(3, cpu_count()))
            self.assertEqual(resolve_cores(2), 2)
            self.assertEqual(resolve_cores(16), 3)
            self.assertEqual(resolve_cores(np.int64(2)), 2)
        with mock.patch.dict(os.environ, {THREADS_ENV: ''}):
            self.assertEqual(resolve_cores(16), 16)
        with mock.patch.dict(os.environ, {THREADS_ENV: '0'}):
            self.assertEqual(resolve_cores(None), cpu_count())
        with self.assertRaises(ValueError):
            resolve_cores(-1)
        with self.assertRaises(TypeError):
            resolve_cores(2.5)

    def test_ordered_map(self):
        items = list(range(20))
        self.assertEqual(ordered_map(lambda x: x * x, items, cores=4), [x * x for x in items])
        self.assertEqual(ordered_map(lambda x: x + 1, items, cores=1), [x + 1 for x in items])


class TestLogging(TestCase):
    def test_rich_error_message(self):
        self.assertEqual(rich_error_message(ConfigError('bad "M"')), 'ConfigError: bad "M"')
        e = BatchEvaluationError(7, 'non-finite loss')
        self.assertEqual(e.batch_index, 7)
        self.assertEqual(rich_error_message(e), 'BatchEvaluationError: batch 7: non-finite loss')

    def test_no_duplicate_handlers(self):
        name = 'spherecl.tests.duplicate'
        setup_terminal_logger(name)
        logger = setup_terminal_logger(name, level=logging.DEBUG)
        self.assertEqual(len(logger.handlers), 1)
        self.assertEqual(logger.level, logging.DEBUG)
        logger.handlers.clear()


class TestPandasHelpers(TestCase):
    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmpdir)

    def test_trajectory_frame(self):
        df = trajectory_frame([(0, 1.5, 0.1), (1, 1.25, 0.05)])
        self.assertEqual(list(df.columns), ['step', 'loss', 'grad_norm'])
        self.assertEqual(df['step'].dtype, np.dtype(int))
        with self.assertRaises(TypeError):
            trajectory_frame(np.zeros((2, 3)))

    def test_convergence_frame(self):
        row = dict.fromkeys(CONVERGENCE_COLUMNS, 0.)
        row['M'] = 4
        df = convergence_frame([row])
        self.assertEqual(list(df.columns), CONVERGENCE_COLUMNS)
        with self.assertRaises(KeyError):
            convergence_frame([{'M': 4}])

    def test_frame_records_and_csv(self):
        df = pd.DataFrame({'M': np.array([2, 4]), 'flag': np.array([True, False])})
        recs = frame_records(df)
        self.assertEqual(recs, [{'M': 2, 'flag': True}, {'M': 4, 'flag': False}])
        self.assertIsInstance(recs[0]['M'], int)
        path = write_csv(df, os.path.join(self.tmpdir, 'sub', 'table.csv'))
        pd.testing.assert_frame_equal(pd.read_csv(path), df)
