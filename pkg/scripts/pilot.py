"""Pilot measurements behind the desk-scale acceptance thresholds.

Runs each acceptance quantity over a wider grid than the gate uses and
prints a plain-text table.  The committed output is scripts/pilot_output.txt:

    python scripts/pilot.py > scripts/pilot_output.txt
"""

import math
import time

import numpy as np

from nilflow.blocks import block_pipeline, direct_weyl_average, select_block_length
from nilflow.equidist import Bump, Character, joint_orbit_average, orbit_average, orbit_coords, star_discrepancy_1d
from nilflow.errors import NoFeasibleBlockLength
from nilflow.hardy import SymbolicReal
from nilflow.nilgroup import SymbolicElement
from nilflow.randomseq import SigmaSpec, compare_averages, moment_estimate, sample, weight
from nilflow.sequences import HardySequence, scaled_fractional_parts

HEIS = SymbolicElement.heisenberg(SymbolicReal.sqrt(2), SymbolicReal.sqrt(3), 0)
GRID = (10**3, 10**4, 10**5, 3 * 10**5)


def section(title):
    print(f"\n== {title}")


def star_table():
    section("star discrepancy of {a(n)}, n = 2..N+1")
    print("a".ljust(24) + "".join(f"N={N:<10d}" for N in GRID))
    for expr in ("t^(3/2)", "t*log(t)", "sqrt2*t^2 + t^(1/2)", "log(t)"):
        x = HardySequence(expr).fractional_parts(GRID[-1])
        print(expr.ljust(24) + "".join(f"{star_discrepancy_1d(x[:N]):<12.5f}" for N in GRID))
    ints = [int(m) ** 2 for m in HardySequence("t^(3/2)").integer_parts(GRID[-1])]
    x = scaled_fractional_parts(ints, "sqrt2")
    print("sqrt2 [t^(3/2)]^2".ljust(24) + "".join(f"{star_discrepancy_1d(x[:N]):<12.5f}" for N in GRID))
    # N^(-1/4) reference for t^(3/2)
    print("N^(-1/4)".ljust(24) + "".join(f"{N ** -0.25:<12.5f}" for N in GRID))


def block_table():
    section("block pipeline for t log t, kappa = 1: |pipeline - direct| and the summed bound")
    print(f"{'degree':>6} {'block length':>22} {'N_end':>8} {'gap':>10} {'bound':>10}")
    for m in (2, 3, 4):
        try:
            bl = select_block_length("t*log(t)", m)
        except NoFeasibleBlockLength as e:
            print(f"{m:>6} {'infeasible':>22} ({e})")
            continue
        for N in (10**3, 10**4, 10**5):
            r = block_pipeline("t*log(t)", 1, N, block_length=bl)
            gap = abs(r.aggregate - direct_weyl_average("t*log(t)", 1, 2, N, 192))
            print(f"{m:>6} {str(bl):>22} {N:>8} {gap:>10.2e} {r.bound:>10.3e}")


def orbit_table():
    section("Heisenberg b = (sqrt2, sqrt3, 0): |orbit average - Haar|")
    fns = [Character([1], [0]), Character([0, 1], [0, 1]), Bump([2])]
    ints = [int(m) for m in HardySequence("t^(3/2)").integer_parts(GRID[-1])]
    c1 = orbit_coords(HEIS, ints)
    for f in fns:
        print(f"[n^(3/2)] {f!r:36s}" + "".join(
            f"{orbit_average(None, None, None, f, N, coords=c1).gap:<12.5f}" for N in GRID))
    ints = [int(m) for m in HardySequence("t^(5/2)").integer_parts(GRID[-1])]
    c2 = orbit_coords(HEIS, ints)
    f = Character([1, 1], [0, 3])
    print(f"joint     {f!r:36s}" + "".join(
        f"{joint_orbit_average(None, None, None, f, N, coords=[c1, c2]).gap:<12.5f}" for N in GRID))


def random_table():
    section("sigma_n = n^(-1/2), seeds 0..39")
    spec = SigmaSpec.power("1/2")
    N = 10**5
    full = orbit_average(None, None, None, Character([1], [0]), coords=orbit_coords(HEIS, range(1, N + 1))).value
    growth, gaps = [], []
    for seed in range(40):
        smp = sample(spec, seed, terms=N)
        growth.append(smp.term(10**4) / 10**8)
        gaps.append(compare_averages(smp, HEIS, None, Character([1], [0]), N, full=full).gap)
    q = lambda v: " ".join(f"{x:.4f}" for x in np.quantile(v, [0, 0.1, 0.5, 0.9, 1]))  # noqa: E731
    print(f"a_n / n^2 at n = 1e4, quantiles 0/10/50/90/100%: {q(growth)}")
    print(f"a_n / ((1-c) n)^2 = a_n / (n^2/4):               {q(np.array(growth) * 4)}")
    print(f"sparse gap at N = 1e5 (first N terms):          {q(gaps)}")
    for n in (10**3, 10**4, 10**5):
        m = moment_estimate(spec, 1, n, trials=500)
        ref = math.sqrt(math.log(n) / weight(spec, n))
        print(f"moment at N = {n:>6}: {m.value:.4f} +- {m.stderr:.4f} (p = {m.p}); sqrt(log N / w(N)) = {ref:.4f}")


if __name__ == "__main__":
    t0 = time.perf_counter()
    star_table()
    block_table()
    orbit_table()
    random_table()
    print(f"\ntotal {time.perf_counter() - t0:.0f}s")
