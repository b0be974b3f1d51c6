"""vslqsim: pulse-level simulator and benchmarks for the VSLQ logical qubit.

Layered as: algebra (operators on labelled composite spaces) -> model
(Hamiltonians, logical operators, ideal gates) -> pulse (envelopes,
schedules, calibration) -> dynamics (Lindblad integrator) -> noise (1/f
dephasing studies) -> bench (gate-error protocols) -> cli (experiment
driver).
"""

from . import algebra, bench, cli, dynamics, model, noise, pulse, units

__all__ = ["algebra", "model", "pulse", "dynamics", "noise", "bench", "cli", "units"]
__version__ = "0.1.0"
