"""memtestkit: pattern memory tests, a deterministic fault simulator and fleet analytics.

Modules
-------
memdev     device contract, host-RAM device, virtual clock
faultsim   simulated device with stuck-at, transient, coupling, overdrive and ALU faults
patterns   Park-Miller and cyclic LCG generators, walking pattern tables
testkit    the thirteen test kernels and the iteration protocol
coalesce   G80/GT200 half-warp transaction model
fleet      planted card fleets, campaigns and the record format
analytics  per-card estimates, entropy, information gain, MI matrix
cli        ``memtestkit`` command
"""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
