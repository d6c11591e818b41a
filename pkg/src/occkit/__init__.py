"""One-class-classification intrusion detection toolkit.

Detectors train on benign traffic only; test instances scoring at or below
mean - 3*std of the training scores are flagged as attacks, individually and
through any-k detector consensus. Includes the supervised random-forest
baseline with uniform-noise augmentation and the attack-omission experiment
harness for zero-day evaluation.
"""

__version__ = "0.1.0"
