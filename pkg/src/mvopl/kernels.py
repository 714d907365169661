"""Backend selection for the hot loops.

The compiled extension is used when it was built; otherwise the numpy
fallback is imported. ``BACKEND`` names whichever one is active.
"""
try:
    from mvopl._kernels import diag_gauss_logpdf, weight_summary

    BACKEND = "compiled"
except ImportError:  # extension not built
    from mvopl._pykernels import diag_gauss_logpdf, weight_summary

    BACKEND = "python"

__all__ = ["BACKEND", "diag_gauss_logpdf", "weight_summary"]
