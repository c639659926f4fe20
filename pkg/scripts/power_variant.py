"""Ensemble estimate of the output power spectrum against both closed-form numerators.

The lag-sum estimate at omega = 0 decides between the derived-consistent
form (16/9 at the default point) and the as-printed one (20/9).
"""

import argparse

import numpy as np

from dpo_sim import analytic
from dpo_sim.estimators import spectrum_from_correlation
from dpo_sim.io import write_csv
from dpo_sim.params import DpoParams
from dpo_sim.validation import run_ensemble


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ntraj", type=int, default=4000)
    ap.add_argument("--seed", type=int, default=17)
    ap.add_argument("--out", default="results/power_variant.csv")
    args = ap.parse_args()

    p = DpoParams(0.8, 0.2, 0.0)
    w = np.linspace(0.0, 1.5, 7)
    ec = run_ensemble(p, args.ntraj, args.seed, dt=0.05)
    est = spectrum_from_correlation(ec.by_kind("output-power"), w, p.n_res)
    derived = analytic.power_spectrum(p, w, variant="derived-consistent").values
    printed = analytic.power_spectrum(p, w, variant="as-printed").values
    se = est.meta["std_errs"]
    rows = list(zip(w.tolist(), est.values.tolist(), se.tolist(), derived.tolist(), printed.tolist()))
    for wi, v, s, d, pr in rows:
        print(f"omega={wi:.2f}  estimate {v:.4f} +/- {s:.4f}  derived {d:.4f}  printed {pr:.4f}")
    write_csv(args.out, ["omega", "estimate", "stderr", "derived", "printed"], rows, {**p.as_dict(), "ntraj": args.ntraj, "seed": args.seed})


if __name__ == "__main__":
    main()
