"""Tabulate exit probabilities for a scalar error process and read them back.

Prints H(r, m) at a few norms, then the M-step transmit probability and its
1-byte quantized form.  Runs in a couple of seconds.
"""
import warnings

import numpy as np

from ptrigger.commprob import HorizonParams, m_step_probability, quantize
from ptrigger.exitprob import ErrorProcessSpec, build_exit_table, query_exit_probability

warnings.simplefilter("ignore", RuntimeWarning)

spec = ErrorProcessSpec(A_cl=[[1.0]], sigma_w=[[2e-5]], delta=0.02, dt=0.01)
table = build_exit_table(spec, grid_size=21, max_steps=4, samples=20000, seed=7)

print("   r/delta   H(r,1)   H(r,2)   H(r,4)")
for frac in (0.0, 0.25, 0.5, 0.75, 0.95):
    r = frac * spec.delta
    hs = [query_exit_probability(table, r, m) for m in (1, 2, 4)]
    print(f"   {frac:7.2f}  " + "  ".join(f"{h:7.4f}" for h in hs))

params = HorizonParams(M=2, delta=spec.delta, p_lower=0.05)
z = np.linspace(0.0, 0.019, 5)
P = m_step_probability(table, params, z)
for zi, pi in zip(z, np.atleast_1d(P)):
    print(f"z={zi:.4f}  P={pi:.4f}  byte={quantize(pi):3d}  reports={pi > params.p_lower}")
