"""
Convergence on the two analytic test problems
=============================================

``kkt-ec`` is ``min (x-1)^2  s.t.  x <= 0`` and ``kkt-cc`` is
``min (x-2)^2  s.t.  x^2 - 1 <= 0`` with the constraint written as a
composition. Both are noisy (Rademacher noise on every sampled level), and
both have known primal/dual solutions, so the optimality gap and the
constraint violation of the averaged iterate can be measured exactly.

Run from the repository root::

    python3 demos/kkt_rates.py
"""

import numpy as np

from cosco import dual_trace_stats, fit_loglog_slope, make_kkt_problem_cc, make_kkt_problem_ec, solve

HORIZONS = [100, 1_000, 10_000]
SEEDS = range(8)

for make in (make_kkt_problem_ec, make_kkt_problem_cc):
    problem = make()
    print(f"\n{problem.name}: x* = {problem.x_star[0]}, F* = {problem.f_star}, "
          f"lambda* = {problem.lambda_star[0]}")
    gaps, resids = [], []
    for N in HORIZONS:
        recs = [solve(make(), N, seed=np.random.SeedSequence([N, s]), checkpoints=False)
                for s in SEEDS]
        gap = np.mean([abs(r.obj_gap) for r in recs])
        resid = np.mean([r.feas_resid for r in recs])
        lam = np.mean([r.dual_norm_final for r in recs])
        gaps.append((N, gap))
        resids.append((N, resid))
        print(f"  N={N:>6}  mean|gap|={gap:.4f}  mean resid={resid:.4f}  "
              f"mean final lambda={lam:.3f}")

    # a 1/sqrt(N) rate shows up as slope -1/2 on a log-log plot
    print(f"  slope of |gap|  : {fit_loglog_slope(gaps):+.3f}")
    print(f"  slope of resid  : {fit_loglog_slope(resids):+.3f}")

    # the multiplier settles instead of drifting upward
    rec = solve(make(), 20_000, seed=1, checkpoints=False)
    stats = dual_trace_stats(rec.dual_trace)
    print(f"  multiplier trace: max={stats.max:.3f} final={stats.final:.3f} "
          f"tail/head ratio={stats.tail_growth_ratio:.2f}")

# The averaged iterate sits slightly on the infeasible side (the multiplier
# starts at zero and has to climb to lambda*), so the signed gap is negative
# and the rates above are fitted on its magnitude.
