"""Shared CLI fixture: a small synthetic collector corpus plus auxiliary files."""

import hashlib
import os

from hspkit import cli
from hspkit.prefix import anchor_of, is_hyper_specific
from hspkit.synth import make_corpus, write_corpus

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")

# verb -> extra arguments; '@name' is resolved against the fixture dir
VERBS = {
    "growth": [],
    "share": [],
    "visibility": [],
    "timeline": [],
    "classify": [],
    "communities": [],
    "aggregation": [],
    "rov": ["--roas", "@roas.csv"],
    "attribute": ["--irr", "@routes.rpsl", "--roas", "@roas.csv"],
    "rank": ["-n", "5"],
    "categories": ["--category-map", "@categories.csv"],
    "export": ["--roas", "@roas.csv"],
}


def small_corpus():
    return make_corpus(seed=1, prefixes=150, days=3, updates_per_day=40)


def build_fixture(directory):
    """Write MRT files and auxiliary inputs; return (corpus, mrt paths)."""
    corpus = small_corpus()
    paths = write_corpus(os.path.join(directory, "mrt"), corpus)
    hsps = sorted({r.prefix for r in corpus.rib if is_hyper_specific(r.prefix)})
    origins = {}
    for r in corpus.rib:
        origins.setdefault(r.prefix, r.origin_asn)
    with open(os.path.join(directory, "roas.csv"), "w") as fh:
        fh.write("prefix,max_length,asn\n")
        for i, p in enumerate(hsps[:30]):
            anchor = anchor_of(p)
            max_len = anchor.length if i % 3 == 0 else p.length
            asn = origins[p] if i % 4 else origins[p] + 1
            fh.write(f"{anchor},{max_len},{asn}\n")
    with open(os.path.join(directory, "routes.rpsl"), "w") as fh:
        for p in hsps[::2]:
            kw = "route" if p.family == 4 else "route6"
            fh.write(f"{kw}: {p}\norigin: AS{origins[p]}\nsource: TEST\n\n")
    with open(os.path.join(directory, "categories.csv"), "w") as fh:
        fh.write("asn,category\n")
        for asn in sorted(set(origins.values()))[::5]:
            fh.write(f"{asn},{'Content' if asn % 2 else 'ISP (Stub)'}\n")
    return corpus, paths


def verb_args(verb, fixture_dir):
    return [os.path.join(fixture_dir, a[1:]) if a.startswith("@") else a for a in VERBS[verb]]


def scan(store, paths, *extra):
    return cli.main(["scan", "--store", str(store), "--out-dir", str(store) + "-scan",
                     *extra, *[f"rc={p}" for p in paths]])


def run_verb(verb, store, out_dir, fixture_dir, fmt="csv"):
    return cli.main([verb, "--store", str(store), "--out-dir", str(out_dir), "--format", fmt,
                     *verb_args(verb, fixture_dir)])


def tree_digest(directory):
    """Map relative path -> sha256 of every file below ``directory``."""
    out = {}
    for root, _, files in os.walk(directory):
        for name in files:
            path = os.path.join(root, name)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, directory)] = hashlib.sha256(fh.read()).hexdigest()
    return out
