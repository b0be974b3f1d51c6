"""Unit conventions shared across the package.

Internally every generator is expressed in rad/ns and every decay rate in
1/ns.  User-facing numbers follow the microwave-lab habit:

* drive amplitudes and frequencies are quoted in MHz and get multiplied by
  2*pi when they enter a Hamiltonian,
* decay rates are quoted in MHz as plain (2*pi-free) rates,
* lifetimes (T1P, T2R) are quoted in microseconds,
* times inside schedules and integrators are nanoseconds.
"""

import numpy as np

#: rad/ns per MHz of drive amplitude (the "x 2 pi" convention).
ANGULAR_PER_MHZ = 2.0e-3 * np.pi

#: 1/ns per MHz of plain decay rate.
RATE_PER_MHZ = 1.0e-3


def angular(freq_mhz):
    """Convert an ordinary frequency in MHz to rad/ns."""
    return ANGULAR_PER_MHZ * freq_mhz


def rate_from_mhz(rate_mhz):
    """Convert a plain rate in MHz to 1/ns."""
    return RATE_PER_MHZ * rate_mhz


def rate_from_lifetime(t1_us):
    """Loss rate in 1/ns for a lifetime given in microseconds."""
    return 1.0e-3 / t1_us
