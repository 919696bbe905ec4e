"""Physical constants and reference conditions shared across the simulator."""

BOLTZMANN = 1.380649e-23   # J/K (exact, SI 2019)
ELEM_CHARGE = 1.602176634e-19  # C (exact, SI 2019)

CELSIUS_OFFSET = 273.15    # K
T_REF_KELVIN = 300.0       # K, reference for threshold tempco and prefactor scaling
T_REF_CELSIUS = 27.0       # deg C, reference for normalized temperature sweeps

# Model validity window for all device evaluations.
T_MIN_CELSIUS = -25.0
T_MAX_CELSIUS = 125.0


def thermal_voltage(kelvin: float) -> float:
    """kT/q in volts."""
    return BOLTZMANN * kelvin / ELEM_CHARGE
