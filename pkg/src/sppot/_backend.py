"""Backend selection for the scaling kernels.

The compiled extension is preferred when importable; set SPPOT_BACKEND to
"python" or "compiled" to force a choice. `get_kernels` exposes both for the
backend benchmark.
"""

import os

from ._kernels import py as _py_kernels

try:
    from ._kernels import _fast as _compiled_kernels
except ImportError:
    _compiled_kernels = None


def available_backends() -> list[str]:
    names = ["python"]
    if _compiled_kernels is not None:
        names.insert(0, "compiled")
    return names


def get_kernels(name: str | None = None):
    """Return the kernel module for `name` ("compiled", "python" or None/auto)."""
    if name in (None, "auto"):
        name = os.environ.get("SPPOT_BACKEND", "auto")
    if name in (None, "auto"):
        return _compiled_kernels if _compiled_kernels is not None else _py_kernels
    if name == "python":
        return _py_kernels
    if name == "compiled":
        if _compiled_kernels is None:
            raise RuntimeError("compiled backend requested but the extension is not built")
        return _compiled_kernels
    raise ValueError(f"unknown backend {name!r}")


def active_backend() -> str:
    return "compiled" if get_kernels() is _compiled_kernels and _compiled_kernels is not None else "python"


def scaling_weighted_kl(C, alpha, beta, f, epsilon, tol, max_iter, threshold):
    return get_kernels().scaling_weighted_kl(C, alpha, beta, f, epsilon, tol, max_iter, threshold)


def gsa_total_mass(C, alpha, beta, f, rho, epsilon, tol, max_iter):
    return get_kernels().gsa_total_mass(C, alpha, beta, f, rho, epsilon, tol, max_iter)
