"""
Symmetric pulses and higher moments
===================================

A squeeze ``exp(-i alpha2 x^2)`` is even in ``x``, so it only couples levels
two apart.  In ``<x>`` it produces the ``2 tau`` and ``T_x - 2 tau`` echoes but
nothing at ``T_x - tau``.  Higher moments ``<x^p>`` contain ladder offsets
``j = p, p-2, ...`` and so revive at fractions ``T_x / j``.
"""

# %%
import numpy as np

from echolab.echo_analysis import build_schedule, measure_echo
from echolab.grid_solver import TimeSeries
from echolab.scan_harness import Experiment, model_series
from echolab.spectral_model import predict_revival_time

tau = 1299.0
T_x = predict_revival_time(0.001, 12.5).T_x
t = np.arange(0.0, 8400.0, 0.1)
for alpha2 in (0.001, 0.005, 0.01):
    s = model_series(Experiment(d1=5.0, alpha2=alpha2, tau=tau, t_final=8400.0), t, per_order=True)
    resp = TimeSeries(t, {1: s.metadata["orders"]["x1_order1"]})
    amps = [measure_echo(resp, 1, c).amplitude for c in (2 * tau, T_x - 2 * tau, T_x - tau)]
    print(f"alpha2 = {alpha2:<6} 2tau {amps[0]:.4f}  T_x-2tau {amps[1]:.4f}  T_x-tau {amps[2]:.5f}")

# %%
# Where the second and third moments show structure after a translation kick.
for p in (2, 3):
    sched = build_schedule(0.001, 12.5, 1499.0, p=p, n_max=1)
    print(f"<x^{p}>:", ", ".join(f"{e.nominal_time:.0f}" for e in sched if e.nominal_time < 9600))

# %%
# The model for ``<x^2>`` has its first recurrence at ``T_x / 2``.
exp = Experiment(d1=5.0, d2=0.05, tau=1499.0, moments=(2,))
t2 = np.arange(3800.0, 4800.0, 0.1)
x2 = model_series(exp, t2)[2]
print(f"<x^2> swing near T_x/2: {np.ptp(x2[np.abs(t2 - T_x / 2) < 150]):.2f}, "
      f"near T_x/2 - 400: {np.ptp(x2[np.abs(t2 - T_x / 2 + 400) < 50]):.2f}")
