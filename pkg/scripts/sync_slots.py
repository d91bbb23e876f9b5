"""Cart-pole synchronization: mean error and utilization against slot count K."""
import warnings

from ptrigger.simulation import RunConfig, build_tables, run

warnings.simplefilter("ignore", RuntimeWarning)

base = RunConfig("cartpole-sync", N=10, K=4, policy="PT", delta=0.02, c=0.5, M=2, T=10.0,
                 scenario_params={"sigma_w": 2.5e-5})
tables = build_tables(base)

print(" K  policy   E_bar      U_bar   diverged")
for K in (2, 4, 8):
    for pol in ("PT", "PT_STAR", "ET2"):
        r = run(base.replace(K=K, policy=pol, seed=1), tables)
        print(f"{K:2d}  {pol:7s} {r.E_bar:9.5f}  {r.U_bar:7.4f}   {r.diverged}")
