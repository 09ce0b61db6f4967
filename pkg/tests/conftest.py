import numpy as np

from fddkit.prbs import BandSpec


def random_feasible_band(rng, t_s):
    """Draw a band guaranteed to admit a plan with n <= 16 at sample time t_s.

    omega_high stays below 2.8/t_s so at least the one-sample clock works;
    omega_low stays above the n = 16 fundamental for the implied clock.
    """
    omega_high = rng.uniform(2.8 / (20.0 * t_s), 2.8 / t_s)
    k = max(1, int(2.8 / (omega_high * t_s)))
    floor_low = 2.0 * np.pi / ((2 ** 16 - 1) * k * t_s)
    omega_low = rng.uniform(floor_low * 1.01, omega_high / 2.0)
    return BandSpec(omega_low, omega_high, omega_nyquist=omega_high)
