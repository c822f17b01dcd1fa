"""Kernel selection: compiled extension when available, numpy fallback otherwise."""

try:
    from . import _kernels as impl
except ImportError:  # extension not built
    from . import _kernels_py as impl

leapfrog_step = impl.leapfrog_step
USING_COMPILED = bool(getattr(impl, "COMPILED", False))
