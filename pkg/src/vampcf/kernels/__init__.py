"""Hot-kernel backend selection.

The compiled extension is preferred when importable; the numpy reference
implementation is the fallback. ``VAMPCF_KERNELS=ref`` or ``=fast`` forces
a backend (the latter raises if the extension is missing). Both expose the
same functions with identical semantics; see ``tests/test_kernels.py`` for
the parity checks and ``benchmarks/bench_kernels.py`` for a comparison.
"""
import os

from . import ref

_forced = os.environ.get("VAMPCF_KERNELS", "").strip().lower()

if _forced == "ref":
    _impl = ref
elif _forced == "fast":
    from . import _fast as _impl
else:
    try:
        from . import _fast as _impl
    except ImportError:
        _impl = ref

BACKEND_NAME = _impl.BACKEND_NAME

sigmoid = _impl.sigmoid
sigmoid_bwd = _impl.sigmoid_bwd
tanh_bwd = _impl.tanh_bwd
softplus = _impl.softplus
softplus_bwd = _impl.softplus_bwd
logsumexp_rows = _impl.logsumexp_rows
logsumexp_rows_bwd = _impl.logsumexp_rows_bwd
log_softmax_rows = _impl.log_softmax_rows
log_softmax_rows_bwd = _impl.log_softmax_rows_bwd
l2_normalize_rows = _impl.l2_normalize_rows
l2_normalize_rows_bwd = _impl.l2_normalize_rows_bwd
adam_update = _impl.adam_update
