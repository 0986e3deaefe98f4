"""Watch the support front of three reference methods at the default instance.

Prints, per iteration, the front J of each method next to the staircase that
bounds it, then the oracle count each one needs to touch the last coordinate.

    python demos/support_fronts.py
"""

from fomlb.algorithms import run_alm_class1, run_ladmm_class2, run_penalty_class1
from fomlb.checks import C0, staircase
from fomlb.instance import InstanceParams

params = InstanceParams(**C0)
budget = 75

runs = {
    "penalty": run_penalty_class1(params, max_oracles=budget),
    "alm": run_alm_class1(params, max_oracles=budget),
    "ladmm": run_ladmm_class2(params, max_oracles=budget),
}

print(f"m = {params.m}, dbar = {params.dbar}, d = {params.d}")
print(f"{'t':>3} {'penalty':>8} {'alm':>5} {'bound1':>7} {'ladmm':>6} {'bound2':>7}")
fronts = {k: tr.fronts for k, tr in runs.items()}
for t in range(len(fronts["penalty"])):
    print(
        f"{t:>3} {fronts['penalty'][t]:>8} {fronts['alm'][t]:>5} {staircase(params, t, 1):>7}"
        f" {fronts['ladmm'][t]:>6} {staircase(params, t, 2):>7}"
    )

for name, tr in runs.items():
    t = tr.first_reach(params.dbar)
    calls = tr.records[t].oracle_count if t is not None else None
    print(f"{name}: last coordinate reached at iteration {t} ({calls} oracle calls)")
