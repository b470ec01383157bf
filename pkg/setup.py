"""
spherecl evaluates, optimizes and certifies contrastive losses whose
embeddings live on the unit hypersphere
:license: GPL-3.0
"""
from setuptools import setup

setup()
