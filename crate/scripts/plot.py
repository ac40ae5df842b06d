#!/usr/bin/env python3
"""Plot benchmark records written by `anonkey bench ... --out STEM`.

Reads STEM.jsonl (or a .csv) and draws:
  prove-scaling: prove and verify time against depth
  key-request:   stacked phase times against key size

Without matplotlib it prints the same data as a table.
"""

import csv
import json
import sys
from collections import defaultdict
from pathlib import Path

PHASES = ["upload_ms", "validation_ms", "generation_ms", "download_ms"]


def load(path):
    path = Path(path)
    if path.suffix == ".csv":
        with path.open() as f:
            rows = list(csv.DictReader(f))
        for r in rows:
            for k, v in r.items():
                if v == "":
                    r[k] = None
                else:
                    try:
                        r[k] = float(v)
                    except ValueError:
                        pass
        return rows
    with path.open() as f:
        return [json.loads(line) for line in f if line.strip()]


def table(rows, keys):
    print("\t".join(keys))
    for r in rows:
        print("\t".join("" if r.get(k) is None else f"{r[k]}" for k in keys))


def main(argv):
    if len(argv) < 2:
        print(f"usage: {argv[0]} RECORDS.jsonl|RECORDS.csv [OUT.png]", file=sys.stderr)
        return 2
    rows = load(argv[1])
    out = argv[2] if len(argv) > 2 else None
    by_scenario = defaultdict(list)
    for r in rows:
        by_scenario[r["scenario"]].append(r)

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        plt = None

    scaling = sorted(by_scenario.get("prove-scaling", []), key=lambda r: r["depth"])
    keyreq = sorted(by_scenario.get("key-request", []), key=lambda r: r["t"])
    if plt is None:
        if scaling:
            table(scaling, ["depth", "constraints", "proof_bytes", "prove_ms", "verify_ms"])
        if keyreq:
            table(keyreq, ["t"] + PHASES + ["total_ms", "transfer_share"])
        return 0

    panels = [p for p in (scaling, keyreq) if p]
    fig, axes = plt.subplots(1, len(panels), figsize=(6 * len(panels), 4), squeeze=False)
    ax_iter = iter(axes[0])
    if scaling:
        ax = next(ax_iter)
        depths = [r["depth"] for r in scaling]
        ax.plot(depths, [r["prove_ms"] for r in scaling], "o-", label="prove")
        ax.plot(depths, [r["verify_ms"] for r in scaling], "s-", label="verify")
        ax.set_xlabel("tree depth")
        ax.set_ylabel("ms")
        ax.legend()
    if keyreq:
        ax = next(ax_iter)
        labels = [str(int(r["t"])) for r in keyreq]
        bottom = [0.0] * len(keyreq)
        for phase in PHASES:
            vals = [r[phase] or 0.0 for r in keyreq]
            ax.bar(labels, vals, bottom=bottom, label=phase.removesuffix("_ms"))
            bottom = [b + v for b, v in zip(bottom, vals)]
        ax.set_xlabel("key size (bytes)")
        ax.set_ylabel("ms")
        ax.legend()
    fig.tight_layout()
    fig.savefig(out or Path(argv[1]).with_suffix(".png"))
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
