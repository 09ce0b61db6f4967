"""Why closed-loop control hides some faults from the historian.

A biased sensor on a controlled variable feeds its bias straight into
the controller, which dutifully shifts the true process value until the
corrupted measurement sits back on the set-point. The recorded channel
then looks healthy; the evidence moves into coupled channels and the
controller output. A sticky valve is worse: in steady operation the
frozen actuator is nearly invisible, and only a probing signal forces
the tracking failure into the open.
"""

import numpy as np

from fddkit.pipeline import default_excitation
from fddkit.plant import FaultSpec, default_fault_library, default_plant, \
    simulate_scenario

plant = default_plant(seed=11)
lib = default_fault_library(onset=150)
horizon = 450
post = slice(300, 450)

def run(fault=None, prbs=None):
    return simulate_scenario(plant, fault=fault, prbs=prbs,
                             horizon=horizon)

clean = run()

# Same bias size, two placements. Channel 0 is held on a set-point by
# loop 0; channel 2 is just recorded.
bias = 0.8
masked = run(FaultSpec("step", target=0, magnitude=bias, onset=150))
visible = run(FaultSpec("step", target=2, magnitude=bias, onset=150))

def shift(ds, col):
    return ds.records[post, col].mean() - clean.records[post, col].mean()

print(f"sensor bias of {bias} after the loop settles:")
print(f"  on controlled channel 0, recorded shift: {shift(masked, 0):+.3f}")
print(f"  ...but loop-0 command moved:             {shift(masked, 8):+.3f}")
print(f"  ...and coupled channel 6 moved:          {shift(masked, 6):+.3f}")
print(f"  on free channel 2, recorded shift:       {shift(visible, 2):+.3f}")

# Stiction on the loop-1 valve: quiet operation barely changes the
# tracked measurement, probing makes the failure obvious.
plan = default_excitation(plant)
stuck_q = run(lib[11])
stuck_e = run(lib[11], prbs=plan)
healthy_e = run(prbs=plan)

def rms(a, b, col):
    d = a.records[post, col] - b.records[post, col]
    return float(np.sqrt(np.mean(d ** 2)))

print("sticky valve, deviation from the matching healthy run (RMS):")
print(f"  quiet,  tracked channel 1: {rms(stuck_q, clean, 1):.3f}")
print(f"  probed, tracked channel 1: {rms(stuck_e, healthy_e, 1):.3f}")
print(f"  probed, loop-1 command:    {rms(stuck_e, healthy_e, 9):.3f}")
