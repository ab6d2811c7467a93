"""Leave-one-user-out comparison of spatial models on synthetic taps.

Generates the seeded dataset, evaluates each model kind with and without the
character LM, prints a CER table and paired tests against the first kind, and
optionally writes the full comparison report as JSON.

    python scripts/run_experiment.py --kinds Distance C CHo Hf --out report.json
"""

import argparse
import json
import logging
import time

from heattap.decoder import DecodeConfig
from heattap.harness import compare, loocv
from heattap.layout import default_layout
from heattap.lm import NgramCharLM, default_corpus
from heattap.spatial import TrainConfig
from heattap.synth import SynthConfig, generate_dataset

ALL_KINDS = ["Distance", "On-key", "C", "Ho", "CHo", "Hf", "CHf"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kinds", nargs="+", default=["Distance", "C", "CHo", "Hf"],
                    choices=ALL_KINDS)
    ap.add_argument("--users", type=int, default=24)
    ap.add_argument("--taps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--suc", action="store_true", help="skip unambiguous taps")
    ap.add_argument("--filter", action="store_true", help="restrict to neighbouring keys")
    ap.add_argument("--precise", action="store_true",
                    help="float64 and no early stop (slower, same conclusions)")
    ap.add_argument("--out", help="write the comparison report here")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    layout = default_layout()
    t0 = time.perf_counter()
    taps = generate_dataset(layout, SynthConfig(seed=args.seed, n_users=args.users,
                                                taps_per_user=args.taps))
    print(f"{len(taps)} taps from {args.users} users ({time.perf_counter() - t0:.1f}s)")
    lm = NgramCharLM().fit(default_corpus())
    train_cfg = TrainConfig() if args.precise else TrainConfig(dtype="float32", ftol=1e-5)
    decode_cfg = DecodeConfig(use_lm=True, use_suc=args.suc, use_filter=args.filter)

    reports = []
    print(f"{'kind':>9} {'LM off':>13} {'LM on':>13} {'time':>6}")
    for kind in args.kinds:
        rep = loocv(taps, kind, decode_cfg, train_cfg, layout=layout, lm=lm, seed=args.seed)
        off, on = list(rep.lm_off.values()), list(rep.lm_on.values())
        print(f"{kind:>9} {sum(off) / len(off):12.2f}% {sum(on) / len(on):12.2f}% "
              f"{rep.meta['seconds']:5.0f}s")
        reports.append(rep)

    if len(reports) > 1:
        comp = compare(reports)
        print("\npaired tests on per-user CER (LM on)")
        for name, s in comp.comparisons.items():
            d = "n/a" if s.d is None else f"{s.d:+.2f}"
            print(f"  {name}: t={s.t:.2f} p={s.p:.2g}  d={d}  W={s.W:g} p={s.p_w:.2g}")
        if args.out:
            with open(args.out, "w") as f:
                json.dump(comp.to_json(), f, indent=1, sort_keys=True)
            print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
