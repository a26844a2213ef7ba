"""How much of each day's HSP population was already seen in the days before.

    python demos/window_consistency.py

Replays a synthetic fortnight, builds the per-day sets of installed HSPs and
prints the mean share for look-back windows of 1 to 12 days, then does the
same for a population that drifts from day to day.
"""

import math

from hspkit.mrt import RecordKind
from hspkit.prefix import is_hyper_specific
from hspkit.synth import make_corpus
from hspkit.timeline import DAY, ObservationWindow, replay, window_consistency


def main():
    corpus = make_corpus(seed=7, prefixes=600, days=14, updates_per_day=150)
    window = ObservationWindow(corpus.start, corpus.start + corpus.days * DAY)
    hsp = lambda recs: [r for r in recs if is_hyper_specific(r.prefix)]
    ups = sorted(hsp(corpus.updates), key=lambda r: r.timestamp)
    intervals = replay(hsp(corpus.rib), ups, window)

    daily = [set() for _ in range(corpus.days)]
    for iv in intervals:
        first = int((iv.start - window.start) // DAY)
        last = math.ceil((iv.end - window.start) / DAY) - 1
        for d in range(first, min(last, corpus.days - 1) + 1):
            daily[d].add(iv.prefix)
    print("day sizes:", [len(s) for s in daily])
    for w in range(1, 13):
        wc = window_consistency(daily, w)
        print(f"w={w:2d}  mean {wc.mean:.3f}  q25 {wc.q25:.3f}  q75 {wc.q75:.3f}")
    withdrawals = sum(r.kind is RecordKind.WITHDRAWAL for r in ups)
    print(f"{len(intervals)} presence intervals from {len(ups)} HSP updates ({withdrawals} withdrawals)")

    # a population that drifts: prefix t+b is up on day t for each offset b,
    # so a longer look-back recognises more of every day's set
    offsets = (0, 1, 2, 4, 7, 11, 16, 22)
    drifting = [{t + b for b in offsets} for t in range(40)]
    print("drifting population:")
    for w in range(1, 13):
        print(f"w={w:2d}  mean {window_consistency(drifting, w).mean:.3f}")


if __name__ == "__main__":
    main()
