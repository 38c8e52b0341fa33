"""Trotterized dynamics and tunneling analysis for 1D hopping chains."""

__version__ = "0.1.0"


def kernel_backend() -> str:
    from . import kernels

    return kernels.BACKEND
