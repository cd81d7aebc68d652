"""Physical constants and fixed conventions used across the package.

Values are CODATA-style constants plus the cesium clock transition. Anything
that is a *modeling choice* (cavity dimensions, cloud parameters, ...) lives in
the configuration dataclasses instead, not here.
"""

from __future__ import annotations

KB: float = 1.380649e-23  # Boltzmann constant, J/K
G_EARTH: float = 9.80665  # standard gravity, m/s^2
CS133_MASS: float = 2.20695e-25  # mass of a 133Cs atom, kg
CS_CLOCK_FREQUENCY: float = 9192631770.0  # Cs hyperfine clock transition, Hz

# First zero of J0' (equivalently of J1): radial eigenvalue of the TE011 mode.
CHI01P: float = 3.8317059702

# First positive zero of the TE11 waveguide eigenvalue chi'_11; sets the
# lowest cutoff of a circular guide and hence the default evanescent decay
# rate inside the endcap holes.
CHI11P: float = 1.8411837813

SPEED_OF_LIGHT: float = 299792458.0  # m/s

TWOPI: float = 6.283185307179586

TOOL_VERSION: str = "0.1.0"  # stamped into result sidecars
