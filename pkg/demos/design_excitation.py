"""Design a probing signal from plant time constants.

The band picks up where the loop dynamics live: the low edge covers the
slowest open-loop settling, the high edge the closed-loop bandwidth,
capped at the sampling Nyquist rate. The plan turns that band into an
LFSR clock and register length, and the spectrum shows how the signal
spreads its power across the band as discrete harmonics under a sinc
envelope.
"""

import numpy as np

from fddkit.prbs import (design_band, generate_mls, plan_from_band,
                         prbs_spectrum, prbs_waveform, schedule_injection)

t_s = 180.0            # sample time, seconds
tau_ol = 1800.0        # slowest open-loop settling time
tau_cl = 1030.0        # closed-loop settling time

band = design_band(tau_ol, tau_cl, omega_nyquist=np.pi / t_s)
print(f"band: [{band.omega_low:.6f}, {band.omega_high:.6f}] rad/s")

plan = plan_from_band(band, t_s, amplitude=0.4, target="loop1")
print(f"clock {plan.t_clock:.0f} s, register {plan.n_register}, "
      f"period {plan.period} chips "
      f"({plan.period * plan.t_clock / 3600:.1f} h per period)")

# Both design rules hold by construction.
assert 2.8 / plan.t_clock >= band.omega_high
assert 2.0 * np.pi / (plan.period * plan.t_clock) <= band.omega_low

chips = generate_mls(plan.n_register, amplitude=plan.amplitude)
highs = int((chips > 0).sum())
print(f"one period: {highs} highs / {plan.period - highs} lows")

# Power density at the harmonic closest to each band edge.
for name, omega in (("low edge", band.omega_low),
                    ("high edge", band.omega_high)):
    dens = prbs_spectrum(plan.amplitude, plan.period, plan.t_clock, omega)
    print(f"power density at {name}: {dens:.4f}")

# Injection happens in bursts so the plant also sees quiet stretches.
mask = schedule_injection(600, plan.burst_len, plan.burst_interval)
wave = prbs_waveform(plan, 600, t_s)
print(f"duty cycle over 600 samples: {mask.mean():.2f}")
print(f"first chips as held samples: {wave[:10].round(2)}")
