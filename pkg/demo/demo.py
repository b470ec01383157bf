"""
:module: demo.py
:license: GNU GPLv3
:purpose: This script walks through most of the methods provided in this
    repository: it screens a pair of kernels, optimizes the symmetric
    InfoNCE loss with free embeddings, certifies the regular simplex and
    cross-polytope minimizers and compares finite-batch expectations with
    the large-batch limit.

    Outputs land in ../demo_output/
"""
import os

import numpy as np

from spherecl.util.logging import setup_terminal_logger
from spherecl.core.kernels import KernelSpec, check_conditions
from spherecl.core.losses import LossSpec
from spherecl.process.metrics import compute_metrics
from spherecl.process.optimize import (
    OptimizerConfig, optimize_free_embeddings, verify_simplex_theorem, verify_cross_polytope)
from spherecl.process.sampling import PairModel, SphereDistribution, convergence_study
from spherecl.util.pandas import write_csv

Logger = setup_terminal_logger(__name__)
setup_terminal_logger('spherecl')

OUTDIR = os.path.join('..', 'demo_output')
os.makedirs(OUTDIR, exist_ok=True)

gauss = KernelSpec('gaussian', {'t': 1.})
riesz = KernelSpec('riesz', {'s': 1.})
for kernel in (gauss, riesz):
    report = check_conditions(kernel)
    Logger.info(f'{kernel}: all conditions hold = {report.all_passed}')

cfg = OptimizerConfig(steps=5000, restarts=3, seed=42)

# Free embeddings, M = d + 1
infonce = LossSpec('infonce', tau=0.5, symmetric=True)
U, V, trajectory = optimize_free_embeddings(infonce, 5, 4, cfg)
write_csv(trajectory, os.path.join(OUTDIR, 'infonce_trajectory.csv'))
Logger.info(f'metrics at the optimum: {compute_metrics(U, V, n_ref=20000, seed=42).to_dict()}')

verdict = verify_simplex_theorem(infonce, 5, 4, cfg)
Logger.info(f'simplex verdict passed={verdict.passed} gap={verdict.alignment_gap:.2e}')

# Kernel contrastive loss with M = 2d lands on the cross-polytope
kcl = LossSpec('kcl', kernel_a=gauss, kernel_u=gauss, gamma=1., symmetric=True)
verdict = verify_cross_polytope(kcl, 3, cfg)
Logger.info(f'cross-polytope verdict passed={verdict.passed}')

# Finite-batch expectations approach the asymptotic loss
dist = SphereDistribution(8, PairModel('jitter', sigma=0.1), seed=7)
table = convergence_study(LossSpec('dhel', tau=0.5), dist, [8, 16, 32, 64, 128],
                          n_batches=100, n_samples=5000, rng=np.random.default_rng(42))
write_csv(table, os.path.join(OUTDIR, 'dhel_convergence.csv'))
Logger.info(f'convergence table\n{table}')
