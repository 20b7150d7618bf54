"""Select the compiled kernels when the extension is built, else the fallback."""

try:
    from ._ckernels import moment_sum, rpn_eval

    BACKEND = "cython"
except ImportError:  # extension not built
    from ._pykernels import moment_sum, rpn_eval

    BACKEND = "python"

__all__ = ["BACKEND", "moment_sum", "rpn_eval"]
