"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when importable; otherwise, or
when ``DQM_PURE_PYTHON=1`` is set, the pure-Python ``_pykernels`` twin is used.
Both expose ``late_probabilities``, ``deviation_costs`` and ``walk_chunk``.
"""

import os

from dqm import _pykernels

if os.environ.get("DQM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from dqm import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = _impl.BACKEND
late_probabilities = _impl.late_probabilities
deviation_costs = _impl.deviation_costs
walk_chunk = _impl.walk_chunk


def available_backends():
    """Map backend name -> kernel module for every backend importable here."""
    found = {"python": _pykernels}
    try:
        from dqm import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found
