"""Why early iterates cannot be eps-stationary.

Runs the penalty method and, for every iterate, prints the smallest
coordinate whose block average is still tiny together with the lower bound it
certifies on the AP residual. The bound stays well above eps at every
iterate shown, even after the support front has reached the last coordinate.

    python demos/certificate.py
"""

from fomlb.algorithms import run_penalty_class1
from fomlb.checks import C0
from fomlb.instance import InstanceParams
from fomlb.stationarity import residual_AP, small_coordinate_witness

params = InstanceParams(**C0)
trace = run_penalty_class1(params, max_oracles=45)

print(f"eps = {params.eps}")
print(f"{'t':>3} {'J':>3} {'witness':>8} {'cert lb':>10} {'AP':>10}")
for rec, x in zip(trace.records, trace.history.xs):
    rep = residual_AP(params, x)
    print(f"{rec.t:>3} {rec.J:>3} {str(small_coordinate_witness(params, x)):>8} {rep.certificate_lb:>10.4f} {rep.residual:>10.4f}")
