#!/usr/bin/env python3
"""Independent high-precision oracle for the frozen expected values used in
the test suite. Deliberately imports nothing from the package: every formula
is written out once more, straight from its definition, with mpmath at 50
digits. Run and copy the printed values into the tests when they change
(they should not).
"""

import itertools

import mpmath as mp

mp.mp.dps = 50


def h2(p):
    p = mp.mpf(p)
    if p == 0 or p == 1:
        return mp.mpf(0)
    return -p * mp.log(p, 2) - (1 - p) * mp.log(1 - p, 2)


def gain(mu, eta, y0):
    return y0 + 1 - mp.exp(-eta * mu)


def qber(mu, eta, y0, e_det, e0):
    return (e0 * y0 + e_det * (1 - mp.exp(-eta * mu))) / gain(mu, eta, y0)


def key_rate_bps(loss_db, eta_det, duty, y0, e_det,
                 mu=mp.mpf("0.65"), nu=mp.mpf("0.1"), e0=mp.mpf("0.5"),
                 f_ec=mp.mpf("1.16"), q=mp.mpf("0.5"),
                 pulse_hz=mp.mpf("2e7"), signal_frac=mp.mpf(14) / 16,
                 abort=mp.mpf("0.11")):
    t = mp.power(10, mp.mpf(loss_db) / 10)
    eta = t * eta_det * duty
    q_mu, q_nu = gain(mu, eta, y0), gain(nu, eta, y0)
    e_mu, e_nu = qber(mu, eta, y0, e_det, e0), qber(nu, eta, y0, e_det, e0)
    if e_mu >= abort:
        return mp.mpf(0), (q_mu, q_nu, e_mu, e_nu)
    y1 = (mu / (mu * nu - nu**2)) * (
        q_nu * mp.exp(nu) - q_mu * mp.exp(mu) * nu**2 / mu**2 - (mu**2 - nu**2) / mu**2 * y0
    )
    y1 = max(mp.mpf(0), min(mp.mpf(1), y1))
    e1 = (e_nu * q_nu * mp.exp(nu) - e0 * y0) / (y1 * nu)
    e1 = max(mp.mpf(0), min(mp.mpf(1), e1))
    q1 = y1 * mu * mp.exp(-mu)
    per_pulse = max(mp.mpf(0), -q_mu * f_ec * h2(e_mu) + q1 * (1 - h2(e1)))
    return pulse_hz * signal_frac * q * per_pulse, (q_mu, q_nu, e_mu, e_nu, y1, e1)


def main():
    print("== transmittance ==")
    for db in ("0", "-3.0103", "-18.4"):
        print(f"  10^({db}/10) = {mp.nstr(mp.power(10, mp.mpf(db) / 10), 12)}")

    print("== channel_from_length ==")
    for km, coef in (("85.1", "0.21"), ("69.7", "0.21"), ("16.9", "0.46")):
        print(f"  -{coef}*{km} = {mp.nstr(-mp.mpf(coef) * mp.mpf(km), 12)}")

    print("== expected_gain(mu=0.65, eta=1e-3, y0=5e-6) ==")
    g = gain(mp.mpf("0.65"), mp.mpf("1e-3"), mp.mpf("5e-6"))
    print(f"  Q = {mp.nstr(g, 12)}")

    print("== expected_qber(mu=0.65, eta=1e-3, y0=5e-6, e_det=0.01, e0=0.5) ==")
    e = qber(mp.mpf("0.65"), mp.mpf("1e-3"), mp.mpf("5e-6"), mp.mpf("0.01"), mp.mpf("0.5"))
    print(f"  E = {mp.nstr(e, 12)}")

    print("== binary entropy ==")
    for p in ("0.11", "0.5"):
        print(f"  H2({p}) = {mp.nstr(h2(mp.mpf(p)), 12)}")

    print("== splitter loss -10*lg N ==")
    for n in (2, 8):
        print(f"  N={n}: {mp.nstr(-10 * mp.log(n, 10), 12)}")

    print("== decoy bounds at mu=0.65 nu=0.1 eta=1e-3 y0=5e-6 e_det=0.01 ==")
    eta, y0, e_det, e0 = mp.mpf("1e-3"), mp.mpf("5e-6"), mp.mpf("0.01"), mp.mpf("0.5")
    mu, nu = mp.mpf("0.65"), mp.mpf("0.1")
    q_mu, q_nu = gain(mu, eta, y0), gain(nu, eta, y0)
    e_mu, e_nu = qber(mu, eta, y0, e_det, e0), qber(nu, eta, y0, e_det, e0)
    y1_l = (mu / (mu * nu - nu**2)) * (
        q_nu * mp.exp(nu) - q_mu * mp.exp(mu) * nu**2 / mu**2 - (mu**2 - nu**2) / mu**2 * y0
    )
    e1_u = (e_nu * q_nu * mp.exp(nu) - e0 * y0) / (y1_l * nu)
    y1_true = y0 + eta - y0 * eta
    e1_true = (e0 * y0 + e_det * eta) / y1_true
    print(f"  y1_lower = {mp.nstr(y1_l, 12)}   true Y1 = {mp.nstr(y1_true, 12)}")
    print(f"  e1_upper = {mp.nstr(e1_u, 12)}   true e1 = {mp.nstr(e1_true, 12)}")
    assert y1_l <= y1_true and e1_u >= e1_true

    print("== secure_key_rate, derived reference point ==")
    print("   (loss=-18.4 dB, eta_det=0.1, duty=1, y0=5e-6, e_det=0.01)")
    r, obs = key_rate_bps("-18.4", mp.mpf("0.1"), 1, mp.mpf("5e-6"), mp.mpf("0.01"))
    print(f"  R = {mp.nstr(r, 12)} bps")
    print(f"  (q_mu={mp.nstr(obs[0], 8)}, q_nu={mp.nstr(obs[1], 8)}, "
          f"e_mu={mp.nstr(obs[2], 8)}, e_nu={mp.nstr(obs[3], 8)})")

    print("== Table 2 assignment, brute force over all 24 permutations ==")
    t2 = [
        [0.97, 0.85, 0.70, 1.12],
        [0.48, 1.02, 0.53, 1.07],
        [0.86, 0.91, 1.09, 0.78],
        [0.56, 0.62, 0.49, 0.67],
    ]
    best = min(
        itertools.permutations(range(4)),
        key=lambda perm: (sum(t2[i][perm[i]] for i in range(4)), perm),
    )
    total = sum(t2[i][best[i]] for i in range(4))
    print(f"  min_sum assignment (receiver index per transmitter): {best}, total = {total:.2f}%")
    worst_entry = max(max(row) for row in t2)
    print(f"  max entry = {worst_entry}%")


if __name__ == "__main__":
    main()
