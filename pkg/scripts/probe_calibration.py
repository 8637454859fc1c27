#!/usr/bin/env python3
"""Scratch probe of the intercity calibration landscape: how the modeled
Hefei-Chaohu / Chaohu-Wuhu rates, QBERs, and the background-shift QBER delta
move across the (eta_det, y0_dark) plane, and where least-squares fits land
for a few weightings. Not part of the package."""

import sys

sys.path.insert(0, "src")

import numpy as np
from scipy.optimize import least_squares

from qkdnet import photonics as ph

HC_LOSS, CW_LOSS = -18.4, -14.1
SRC = ph.SourceConfig()


def observables(eta_det, y0_dark, duty_apds, loss_db):
    det = ph.DetectorConfig(eta_det=eta_det, y0_dark=y0_dark, apd_count=duty_apds)
    det = ph.in_field_conditions(det)
    budget = ph.link_budget(loss_db, SRC, det)
    rate = ph.rate_from_budget(budget, SRC)
    det_bg = ph.DetectorConfig(eta_det=eta_det, y0_dark=y0_dark, apd_count=duty_apds,
                               y_background=det.y_background + 1e-6, e_det=det.e_det)
    e_shift = ph.link_budget(loss_db, SRC, det_bg).e_mu - budget.e_mu
    return rate, budget.e_mu, budget.e_nu, e_shift


def scan():
    print(f"{'eta_det':>8} {'y0_dark':>9} | {'R_hc':>7} {'E_mu%':>6} {'E_nu%':>6} {'dE%':>6} | {'R_cw(duty.5)':>12}")
    for eta in (0.02, 0.026, 0.034, 0.038, 0.042, 0.05, 0.08):
        for y0 in (2e-6, 5e-6, 1e-5):
            r, em, en, de = observables(eta, y0, 2, HC_LOSS)
            rcw, *_ = observables(eta, y0, 1, CW_LOSS)
            print(f"{eta:8.3f} {y0:9.1e} | {r:7.1f} {100*em:6.2f} {100*en:6.2f} {100*de:6.3f} | {rcw:12.1f}")


def fit(weights, lo=0.02, hi=0.15):
    w_rate, w_emu, w_enu, w_shift = weights

    def resid(x):
        eta, y0 = x
        r, em, en, de = observables(eta, y0, 2, HC_LOSS)
        return [
            w_rate * (r - 770.0) / 770.0,
            w_emu * (em - 0.0116) / 0.0116,
            w_enu * (en - 0.0526) / 0.0526,
            w_shift * (de - 0.001) / 0.001,
        ]

    sol = least_squares(resid, x0=[0.05, 5e-6], bounds=([lo, 1e-6], [hi, 1e-5]),
                        x_scale=[0.05, 5e-6])
    eta, y0 = sol.x
    r, em, en, de = observables(eta, y0, 2, HC_LOSS)
    print(f"weights={weights}: eta_det={eta:.5f} y0_dark={y0:.3e}")
    print(f"   -> R_hc={r:.1f} (target 770, band 577-962)  E_mu={100*em:.2f}%  E_nu={100*en:.2f}%  dE={100*de:.3f}% (band 0.03-0.15)")

    def resid_cw(x):
        rcw, *_ = observables(x[0], y0, 1, CW_LOSS)
        return [(rcw - 800.0) / 800.0]

    sol2 = least_squares(resid_cw, x0=[0.05], bounds=([lo], [hi]), x_scale=[0.05])
    rcw, em2, en2, _ = observables(sol2.x[0], y0, 1, CW_LOSS)
    print(f"   single class: eta_det={sol2.x[0]:.5f} -> R_cw={rcw:.1f} (target 800)  E_mu={100*em2:.2f}%")


if __name__ == "__main__":
    scan()
    print()
    for w in [(1, 1, 1, 1), (3, 1, 1, 2), (5, 0.5, 0.5, 3), (4, 0.3, 0.3, 4)]:
        fit(w)
    print("\nwith spec floor eta_det >= 0.05:")
    fit((3, 1, 1, 2), lo=0.05)
