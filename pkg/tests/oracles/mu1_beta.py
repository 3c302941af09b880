"""Regenerate tests/fixtures/mu1_beta.json with 50-digit bisection.

Independent of the package: plain mpmath interval halving on [2, 4].
Run from the repository root:  python tests/oracles/mu1_beta.py
"""
from __future__ import annotations

import json
from pathlib import Path

import mpmath as mp

mp.mp.dps = 50


def root() -> mp.mpf:
    lo, hi = mp.mpf(2), mp.mpf(4)
    for _ in range(200):
        mid = (lo + hi) / 2
        if mid - mp.atan(mid) - mp.pi / 2 < 0:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def main() -> None:
    mu = root()
    b = mp.sqrt(mp.mpf(3) / 4 * (1 + mu * mu))
    data = {
        "method": "mpmath bisection on [2, 4], 200 halvings, 50 digits",
        "mu1": mp.nstr(mu, 40),
        "beta": mp.nstr(b, 40),
        "mu1_float": float(mu),
        "beta_float": float(b),
    }
    out = Path(__file__).resolve().parent.parent / "fixtures" / "mu1_beta.json"
    out.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(out.read_text(), end="")


if __name__ == "__main__":
    main()
