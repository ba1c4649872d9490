"""Transport kernel backend selection.

Prefers the compiled extension (``_core``) and falls back to the numpy
reference implementation when the extension was not built. Both expose the
same four functions; ``BACKEND`` names the active one.
"""

from . import _ref

try:
    from . import _core as _impl
    BACKEND = "compiled"
except ImportError:
    _impl = _ref
    BACKEND = "python"

sinkhorn_log = _impl.sinkhorn_log
gw_lin_cost = _impl.gw_lin_cost
gw_value = _impl.gw_value
gw_grad = _impl.gw_grad


def reference():
    """The pure-numpy backend, regardless of which one is active."""
    return _ref
