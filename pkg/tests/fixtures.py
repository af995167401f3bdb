"""Maps and constants shared by the test modules."""

import math

from src.torus_dynamics import AnosovMapSpec, IntMatrix2, PerturbationTerm

CAT = IntMatrix2(2, 1, 1, 1)
FIBONACCI = IntMatrix2(1, 1, 1, 0)
GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
LOG_LAMBDA = 2.0 * math.log(GOLDEN)

LINEAR = AnosovMapSpec(linear=CAT)
PERTURBED = AnosovMapSpec(
    linear=CAT,
    perturbations=(PerturbationTerm(amplitude=0.05, direction=(1.0, 0.0), frequency=(1, 0)),),
)
WILD = AnosovMapSpec(
    linear=CAT,
    perturbations=(PerturbationTerm(amplitude=0.5, direction=(1.0, 0.0), frequency=(1, 0)),),
)

# |det(A^n - I)| = L_2n - 2 for the cat map
PERIODIC_COUNTS = {1: 1, 2: 5, 3: 16, 4: 45, 5: 121, 6: 320, 8: 2205, 10: 15125, 12: 103680}

FOURIER_TERMS = [(1, 0, 0.1, 0.0), (0, 1, 0.0, 0.05), (1, 1, 0.02, 0.03)]
