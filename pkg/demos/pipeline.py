"""Walk the whole CLI over a synthetic week of collector data.

    python demos/pipeline.py [workdir]

Writes MRT files, scans them into a record store, runs every analysis and
prints a short summary of what came out.
"""

import csv
import json
import os
import sys

from hspkit import cli
from hspkit.prefix import anchor_of, is_hyper_specific
from hspkit.synth import make_corpus, write_corpus


def main(workdir="demo-run"):
    corpus = make_corpus(seed=1)
    paths = write_corpus(os.path.join(workdir, "mrt"), corpus)
    print(f"wrote {len(paths)} MRT files: {len(corpus.rib)} RIB entries, {len(corpus.updates)} updates")

    roas = os.path.join(workdir, "roas.csv")
    with open(roas, "w") as fh:
        fh.write("prefix,max_length,asn\n")
        for rec in corpus.rib[::7]:
            if is_hyper_specific(rec.prefix):
                fh.write(f"{anchor_of(rec.prefix)},{rec.prefix.length},{rec.origin_asn}\n")

    store = os.path.join(workdir, "store")
    out = os.path.join(workdir, "reports")
    common = ["--store", store, "--out-dir", out]
    code = cli.main(["scan", *common, *[f"rrc00={p}" for p in paths]])
    with open(os.path.join(store, "manifest.json")) as fh:
        (snap, info), = json.load(fh)["snapshots"].items()
    print(f"scan exit {code}: snapshot {snap}, {info['decoded']} decoded, {info['kept']} kept")
    for rule, n in info["dropped"].items():
        print(f"  dropped by {rule}: {n}")

    for verb in ("growth", "share", "visibility", "timeline", "classify", "communities",
                 "aggregation", "rank"):
        cli.main([verb, *common])
    cli.main(["rov", *common, "--roas", roas])
    cli.main(["export", *common, "--roas", roas])

    with open(os.path.join(out, "share.csv")) as fh:
        for row in csv.DictReader(fh):
            if row["group"] == "hsp":
                print(f"IPv{row['family']}: {row['prefix_count']} HSPs, share {float(row['share']):.1%}")
    with open(os.path.join(out, "window_consistency.csv")) as fh:
        for row in csv.DictReader(fh):
            print(f"  v{row['family']} w={row['window']}: mean consistency {float(row['mean']):.3f}")
    print(f"reports in {out}, dashboard feeds in {os.path.join(out, 'feeds')}")


if __name__ == "__main__":
    main(*sys.argv[1:])
