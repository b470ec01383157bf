import os
import json
import shutil
import tempfile
from unittest import TestCase

from spherecl.io.config import ExperimentConfig, load_config
from spherecl.core.losses import LossSpec
from spherecl.process.optimize import OptimizerConfig
from spherecl.util.errors import ConfigError

ANTIPODAL = [[1., 0.], [-1., 0.]]


class TestExperimentConfig(TestCase):
    def test_loss_eval_inline(self):
        cfg = ExperimentConfig.from_dict({'command': 'loss-eval',
                                          'loss': {'variant': 'infonce', 'tau': 1},
                                          'embeddings': {'U': ANTIPODAL, 'V': ANTIPODAL}})
        self.assertIsInstance(cfg.loss, LossSpec)
        self.assertEqual((cfg.M, cfg.d), (2, 2))
        U, V = cfg.batches
        self.assertEqual(U.M, 2)

    def test_defaults_filled_in_echo(self):
        cfg = ExperimentConfig.from_dict({'command': 'kernel-check',
                                          'kernel': {'family': 'gaussian', 'params': {'t': 1}}})
        echo = cfg.to_dict()
        self.assertEqual(echo['grid_size'], 256)
        self.assertEqual(echo['n_ref'], 100000)
        self.assertEqual(echo['output_path'], 'results.json')
        self.assertEqual(echo['seed'], 0)
        self.assertEqual(ExperimentConfig.from_dict(echo), cfg)

    def test_echo_round_trip_with_optimizer(self):
        cfg = ExperimentConfig.from_dict({'command': 'optimize', 'seed': 5, 'M': 3, 'd': 4,
                                          'loss': {'variant': 'dhel', 'tau': 0.5, 'symmetric': True},
                                          'optimizer': {'steps': 100}})
        self.assertIsInstance(cfg.optimizer, OptimizerConfig)
        self.assertEqual(cfg.optimizer.seed, 5)
        again = ExperimentConfig.from_dict(cfg.to_dict())
        self.assertEqual(again.to_dict(), cfg.to_dict())

    def test_inherited_optimizer_seed_follows_seed(self):
        base = {'command': 'optimize', 'seed': 5, 'M': 3, 'd': 4,
                'loss': {'variant': 'dhel', 'tau': 0.5}}
        for opt in ({'steps': 100}, None):
            data = dict(base)
            if opt is not None:
                data['optimizer'] = opt
            echo = ExperimentConfig.from_dict(data).to_dict()
            self.assertNotIn('seed', echo['optimizer'])
            self.assertEqual(ExperimentConfig.from_dict(echo).optimizer.seed, 5)
            echo['seed'] = 9
            self.assertEqual(ExperimentConfig.from_dict(echo).optimizer.seed, 9)

    def test_explicit_optimizer_seed_is_kept(self):
        cfg = ExperimentConfig.from_dict({'command': 'optimize', 'seed': 5, 'M': 3, 'd': 4,
                                          'loss': {'variant': 'dhel', 'tau': 0.5},
                                          'optimizer': {'steps': 100, 'seed': 3}})
        echo = cfg.to_dict()
        self.assertEqual(echo['optimizer']['seed'], 3)
        echo['seed'] = 9
        again = ExperimentConfig.from_dict(echo)
        self.assertEqual(again.seed, 9)
        self.assertEqual(again.optimizer.seed, 3)

    def test_default_optimizer(self):
        cfg = ExperimentConfig.from_dict({'command': 'verify-theorems', 'cross_polytope': True, 'd': 2,
                                          'loss': {'variant': 'kcl', 'gamma': 1,
                                                   'kernel_a': {'family': 'gaussian', 'params': {'t': 1}},
                                                   'kernel_u': {'family': 'gaussian', 'params': {'t': 1}}}})
        self.assertEqual(cfg.optimizer, OptimizerConfig())

    def test_rejections(self):
        bad = [
            {'command': 'loss-eval', 'loss': {'variant': 'infonce'},
             'embeddings': {'U': ANTIPODAL, 'V': ANTIPODAL}},
            {'command': 'loss-eval', 'loss': {'variant': 'infonce', 'tau': 1}},
            {'command': 'kernel-check', 'kernel': {'family': 'gaussian', 'params': {'t': 1}}, 'colour': 1},
            {'command': 'train'},
            {'command': 'optimize', 'loss': {'variant': 'infonce', 'tau': 1}, 'M': 3},
            {'command': 'loss-eval', 'loss': {'variant': 'infonce', 'tau': 1},
             'embeddings': {'U': [[2., 0.], [0., 1.]], 'V': ANTIPODAL}},
            {'command': 'convergence', 'loss': {'variant': 'infonce', 'tau': 1},
             'distribution': {'d': 4, 'pair_model': {'kind': 'perfect'}}, 'M_list': [8, 4]},
            {'command': 'grad-check', 'loss': {'variant': 'infonce', 'tau': 1}, 'M': 3, 'd': 2, 'h': 0.1},
            {'command': 'verify-theorems', 'loss': {'variant': 'infonce', 'tau': 1}, 'd': 3},
            {'command': 'expectation', 'loss': {'variant': 'infonce', 'tau': 1}, 'M': 4, 'd': 5,
             'distribution': {'d': 4, 'pair_model': {'kind': 'perfect'}}},
        ]
        for data in bad:
            with self.assertRaises(ConfigError, msg=str(data)):
                ExperimentConfig.from_dict(data)

    def test_distribution_supplies_d(self):
        cfg = ExperimentConfig.from_dict({'command': 'metrics', 'M': 16,
                                          'distribution': {'d': 6, 'pair_model': {'kind': 'jitter', 'sigma': 0.1}}})
        self.assertEqual(cfg.d, 6)


class TestLoadConfig(TestCase):
    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmpdir)

    def write(self, text):
        path = os.path.join(self.tmpdir, 'cfg.json')
        with open(path, 'w') as f:
            f.write(text)
        return path

    def test_overrides(self):
        path = self.write(json.dumps({'command': 'kernel-check', 'seed': 1,
                                      'kernel': {'family': 'linear', 'params': {'t': 2}}}))
        cfg = load_config(path, seed=9, output_path='out.json')
        self.assertEqual(cfg.seed, 9)
        self.assertEqual(cfg.output_path, 'out.json')

    def test_seed_override_reaches_optimizer(self):
        path = self.write(json.dumps({'command': 'optimize', 'seed': 1, 'M': 3, 'd': 3,
                                      'loss': {'variant': 'infonce', 'tau': 1},
                                      'optimizer': {'steps': 10}}))
        self.assertEqual(load_config(path, seed=9).optimizer.seed, 9)

    def test_bad_json(self):
        with self.assertRaises(ConfigError):
            load_config(self.write('{"command": '))
        with self.assertRaises(ConfigError):
            load_config(os.path.join(self.tmpdir, 'missing.json'))
        with self.assertRaises(ConfigError):
            load_config(self.write('[1, 2]'))
