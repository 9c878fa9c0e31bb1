"""
How echo amplitudes scale
=========================

Sweeps over the kick strengths with the model engine of the scan harness.
The first-order echo at ``T_x - tau`` grows like ``d1^2 d2``; the second-order
echoes at ``2 tau`` and ``T_x - 2 tau`` grow like ``d1^3 d2^2``.
"""

# %%
import dataclasses

from echolab.echo_analysis import fit_power_law
from echolab.scan_harness import preset, run_scan

fig4 = dataclasses.replace(preset("fig4"), engine="model")
res = run_scan(fig4, workers=1)
d2 = res.params("d2")
for label in fig4.measurements:
    fit = fit_power_law(d2, res.column(label))
    print(f"{label:18s} amplitude ~ d2^{fit.slope:.3f}  (r^2 = {fit.r_squared:.5f})")

# %%
# Over the ``(d1, d2)`` grid the combined variables collapse the data onto lines.
res5 = run_scan(preset("fig5"), workers=1)
x5 = res5.params("d1") ** 2 * res5.params("d2")
print("T_x - tau vs d1^2 d2:", round(fit_power_law(x5, res5.column("pre m=1 n=1 j=1")).slope, 3))

# %%
# The second-order windows also contain the tail of the first-order response,
# which dominates at small ``d2`` and small ``d1``.  ``isolate_orders`` adds the
# mirrored kick ``-d2`` and keeps the even part, which removes it.
fig6 = preset("fig6")
for isolate in (False, True):
    res6 = run_scan(dataclasses.replace(fig6, isolate_orders=isolate), workers=1)
    x6 = res6.params("d1") ** 3 * res6.params("d2") ** 2
    slopes = [fit_power_law(x6, res6.column(lab)).slope for lab in fig6.measurements]
    print(f"isolate_orders={isolate!s:5}  2tau {slopes[0]:.3f}  T_x-2tau {slopes[1]:.3f}")
