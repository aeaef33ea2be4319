#!/usr/bin/env python3
"""Verify every bundled fixture (or the named ones) and print a summary table.

With ``--write DIR`` each report is also saved as ``DIR/<fixture>.json`` so
that a later run can be diffed against it (``--compare DIR``). Reports hold
no timings, so identical inputs give byte-identical files.
"""

import argparse
import sys
import time
from pathlib import Path

from sbet.config import fixture_names, load_config_text
from sbet.verify import run_verify


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("fixtures", nargs="*", help="fixture names (default: all)")
    p.add_argument("--dt", type=float, help="override grid.dt")
    p.add_argument("--write", type=Path, help="directory to store report JSON")
    p.add_argument("--compare", type=Path, help="directory of stored reports to compare against")
    args = p.parse_args(argv)

    names = args.fixtures or fixture_names()
    status = 0
    for name in names:
        text = f"task: verify\nfixture: {name}\n"
        if args.dt:
            text += f"grid: {{dt: {args.dt}}}\n"
        t0 = time.perf_counter()
        rep = run_verify(load_config_text(text)).report
        worst = max((c for c in rep.checks), key=lambda c: c.value / c.tolerance)
        print(f"{name:6s} {rep.verdict:4s} {len(rep.checks):3d} checks  worst {worst.name} "
              f"{worst.value:.2e}/{worst.tolerance:.0e}  {time.perf_counter() - t0:6.1f} s")
        status |= not rep.passed
        js = rep.to_json()
        if args.write:
            args.write.mkdir(parents=True, exist_ok=True)
            (args.write / f"{name}.json").write_text(js)
        if args.compare:
            ref = args.compare / f"{name}.json"
            same = ref.is_file() and ref.read_text() == js
            print(f"       stored report {'identical' if same else 'DIFFERS'}")
            status |= not same
    return int(status)


if __name__ == "__main__":
    sys.exit(main())
