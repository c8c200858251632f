"""Desk-scale laboratory for quantum convolutional classifiers.

Exact state-vector simulation of small qubit registers, a variational
quantum convolutional classifier with measurement-style pooling, a compact
classical CNN baseline, the flip/rotate/contrast augmentation transforms,
and a seeded experiment harness that compares the two model families on
tiny training sets.
"""

__version__ = "0.1.0"
