"""Temporal steering robustness of open quantum systems.

Modules: :mod:`qmat` (matrix kernels), :mod:`dynamics` (Lindblad models),
:mod:`steering` (measurements and assemblages), :mod:`tsr` (the robustness
SDP and its interior-point solver), :mod:`measures` (negativity, the
simplified radical pair, nonmonotonicity) and :mod:`experiments` (sweeps
driven by :mod:`cli`).
"""

__version__ = "0.1.0"
