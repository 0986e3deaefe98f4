"""Lower-bound quantities as the number of blocks grows.

    python demos/bounds_by_size.py
"""

from fomlb.harness import bounds_report
from fomlb.instance import InstanceParams

print(f"{'m1':>3} {'m2':>3} {'m':>4} {'kappa':>9} {'ratio':>7} {'iters1':>7} {'iters2':>7}")
for m1, m2 in [(2, 1), (2, 2), (2, 4), (4, 4), (2, 8)]:
    p = InstanceParams(eps=0.1, lf=1.0, m1=m1, m2=m2, dbar=5)
    rep = bounds_report(p)
    sup = rep["support"]
    print(
        f"{m1:>3} {m2:>3} {p.m:>4} {rep['kappa_joint']:>9.4f} {rep['ratio']:>7.3f}"
        f" {sup['class1_min_nonstationary_iterations']:>7} {sup['class2_min_nonstationary_iterations']:>7}"
    )
