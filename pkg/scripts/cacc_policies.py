"""Compare PT, ET1 and ET2 on a short CACC platoon run.

All policies share the noise paths of each seed, so the differences come from
scheduling alone.
"""
import sys
import warnings

import numpy as np

from ptrigger.simulation import RunConfig, build_tables, run

warnings.simplefilter("ignore", RuntimeWarning)

N = int(sys.argv[1]) if len(sys.argv) > 1 else 25
base = RunConfig("cacc", N=N, K=20, policy="PT", delta=0.01, c=0.75, M=2, p_lower=0.2, T=10.0,
                 scenario_params={"sigma_w": 9e-6, "x0_var": 0.01})
tables = build_tables(base)

for pol in ("PT", "ET1", "ET2"):
    recs = [run(base.replace(policy=pol, seed=s), tables) for s in (1, 2)]
    E = np.mean([r.E_bar for r in recs])
    U = np.mean([r.U_bar for r in recs])
    print(f"{pol:4s} N={N}  E_bar={E:.5f}  U_bar={U:.4f}")
