"""Two-copy collective measurements for qubit state estimation.

Simulates the N = 2 guessing game with the optimal collective measurement,
the best separable strategy and a HOM-based photonic device, and uses the
collective measurement for pure-state tomography.
"""
__version__ = "0.1.0"

from .qcore import (  # noqa: E402
    ConvergenceError,
    DomainError,
    PureQubit,
    concurrence,
    fidelity_pure,
    haar_random_qubit,
    infidelity_mixed,
    state_from_angles,
    tensor_square,
)
from .measurement import (  # noqa: E402
    DegenerateInputError,
    StrategyKind,
    build_mp_basis,
    build_tetrahedron,
    make_device,
)
