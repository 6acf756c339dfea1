#!/usr/bin/env python3
"""Generate the bundled synthetic daily OHLC fixture.

The path is a seeded log-space Brownian bridge pinned to a handful of open
prices shaped like a large-cap tech stock's 2014-2018 run, laid out on the
NYSE trading calendar. It is synthetic; no quotes are copied.

    python3 scripts/gen_price_fixture.py > crates/core/data/msft_2014_2018.csv
"""

import datetime as dt
import math
import random
import sys

SEED = 20140102
DAILY_VOL = 0.0135

HOLIDAYS = {
    "2014-01-01", "2014-01-20", "2014-02-17", "2014-04-18", "2014-05-26", "2014-07-04",
    "2014-09-01", "2014-11-27", "2014-12-25",
    "2015-01-01", "2015-01-19", "2015-02-16", "2015-04-03", "2015-05-25", "2015-07-03",
    "2015-09-07", "2015-11-26", "2015-12-25",
    "2016-01-01", "2016-01-18", "2016-02-15", "2016-03-25", "2016-05-30", "2016-07-04",
    "2016-09-05", "2016-11-24", "2016-12-26",
    "2017-01-02", "2017-01-16", "2017-02-20", "2017-04-14", "2017-05-29", "2017-07-04",
    "2017-09-04", "2017-11-23", "2017-12-25",
    "2018-01-01", "2018-01-15", "2018-02-19", "2018-03-30", "2018-05-28", "2018-07-04",
    "2018-09-03", "2018-11-22", "2018-12-05", "2018-12-25",
}

# (date, open) pins for the bridge.
ANCHORS = [
    ("2014-01-02", 37.35),
    ("2014-12-31", 46.73),
    ("2015-12-31", 56.04),
    ("2016-12-30", 62.96),
    ("2017-12-29", 85.63),
    ("2018-10-01", 114.75),
    ("2018-12-31", 101.29),
]


def trading_days(start, end):
    d = start
    while d <= end:
        if d.weekday() < 5 and d.isoformat() not in HOLIDAYS:
            yield d
        d += dt.timedelta(days=1)


def bridge(rng, n, a, b):
    """n+1 log prices from a to b, Brownian in between."""
    walk = [0.0]
    for _ in range(n):
        walk.append(walk[-1] + rng.gauss(0.0, DAILY_VOL))
    return [a + (b - a) * i / n + walk[i] - walk[n] * i / n for i in range(n + 1)]


def main():
    rng = random.Random(SEED)
    days = list(trading_days(dt.date(2014, 1, 2), dt.date(2018, 12, 31)))
    index = {d.isoformat(): i for i, d in enumerate(days)}
    log_open = [0.0] * len(days)
    for (d0, p0), (d1, p1) in zip(ANCHORS, ANCHORS[1:]):
        i0, i1 = index[d0], index[d1]
        seg = bridge(rng, i1 - i0, math.log(p0), math.log(p1))
        log_open[i0:i1 + 1] = seg

    out = sys.stdout
    out.write("Date,Open,High,Low,Close,Adj Close,Volume\n")
    for i, d in enumerate(days):
        o = round(math.exp(log_open[i]), 2)
        nxt = math.exp(log_open[i + 1]) if i + 1 < len(days) else o
        c = round(nxt * math.exp(rng.gauss(0.0, 0.004)), 2)
        hi = math.ceil(max(o, c) * (1 + abs(rng.gauss(0.0, 0.006))) * 100) / 100
        lo = math.floor(min(o, c) * (1 - abs(rng.gauss(0.0, 0.006))) * 100) / 100
        adj = round(c * (0.86 + 0.125 * i / (len(days) - 1)), 2)
        vol = int(round(math.exp(rng.gauss(math.log(28e6), 0.35))))
        out.write(f"{d.isoformat()},{o:.2f},{hi:.2f},{lo:.2f},{c:.2f},{adj:.2f},{vol}\n")


if __name__ == "__main__":
    main()
