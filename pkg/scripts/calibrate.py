#!/usr/bin/env python3
"""Regenerate the shipped detector-calibration fixture from the measured
intercity link targets. Usage: python3 scripts/calibrate.py [OUT.json]"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from qkdnet import calibration


def main() -> None:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else calibration.DEFAULT_FIXTURE_PATH
    fixture = calibration.fit_intercity_classes()
    calibration.save_calibration(fixture, out)
    print(f"wrote {out}")
    for name, params in fixture.classes.items():
        print(f"  {name}: eta_det={params.eta_det:.6f} y0_dark={params.y0_dark:.3e} apds={params.apd_count}")
    for key, val in fixture.fit_report["fitted_observables"].items():
        print(f"  {key}: {val:.6g}")


if __name__ == "__main__":
    main()
