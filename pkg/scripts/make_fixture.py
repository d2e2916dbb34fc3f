"""Regenerate the bundled synthetic price file.

A tvDAR(1) path with slowly drifting parameters, shifted to a level near
1.0022 and dated daily from 2017-11-09, 1361 rows.
"""

import datetime as dt
from pathlib import Path

import numpy as np

from tvdar.core import PriceSeries
from tvdar.io import write_price_csv
from tvdar.model import ParamPath, simulate_tvdar

T = 1361
LEVEL = 1.0022
SEED = 1361


def main() -> None:
    path = ParamPath(
        phi=lambda c: 0.6 + 0.2 * c,
        omega=lambda c: 9e-6 * (1.0 + 0.5 * np.sin(2 * np.pi * c)),
        alpha=lambda c: 0.3 + 0.25 * c,
    )
    x = simulate_tvdar(path, T, "gaussian", seed=SEED)
    d0 = dt.date(2017, 11, 9)
    dates = tuple(d0 + dt.timedelta(days=i) for i in range(T))
    # round to the 6 decimals a price feed would carry
    series = PriceSeries(dates, np.round(LEVEL + x.values, 6))
    out = Path(__file__).resolve().parents[1] / "src" / "tvdar" / "data" / "synthetic_peg.csv"
    write_price_csv(out, series)
    print(out, dates[-1])


if __name__ == "__main__":
    main()
