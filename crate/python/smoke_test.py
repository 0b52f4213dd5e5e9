# Copyright 2026 The nvsim Authors
# SPDX-License-Identifier: Apache-2.0
"""Smoke test for the nvsim extension module.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/nvsim-*.whl
"""

import math

import nvsim


def check(name, ok, detail=""):
    print(f"{'ok  ' if ok else 'FAIL'} {name} {detail}")
    return ok


def main():
    results = []
    c = nvsim.NvConstants()
    zero = nvsim.FieldEnvironment()
    d = nvsim.DriveParameters(16.0, 2.0)

    times = [k * 1e-9 for k in range(2000)]
    trace = nvsim.dense_trace(c, zero, d, times)
    peaks = sorted(p / 1e6 for p in trace.peaks())
    results.append(check("three spectral lines", len(peaks) == 3 and all(
        abs(p - q) < 0.01 for p, q in zip(peaks, [7.0, 9.0, 16.0])), f"{peaks}"))

    exact = nvsim.ramsey_signal(c, zero, d, times[::10], engine="full")
    approx = trace.values[::10]
    rms = math.sqrt(sum((a - b) ** 2 for a, b in zip(exact, approx)) / len(exact))
    results.append(check("full engine tracks closed form", rms < 0.02, f"rms={rms:.4f}"))

    ex = nvsim.FieldEnvironment(e_v_per_cm=[1000.0, 0.0, 0.0])
    wp0, _ = nvsim.transition_frequencies(c, zero, d)
    wp1, _ = nvsim.transition_frequencies(c, ex, d)
    results.append(check("Ex moves w+ by (3/2) d_perp E", abs(abs(wp1 - wp0) - 25.5e3) < 50, f"{wp1 - wp0:.1f} Hz"))

    scan = nvsim.frequency_shift_scan(c, d, "ex", [-1000.0, 0.0, 1000.0], n_max=200)
    slope = (scan[2][1] - scan[0][1]) / 2000.0
    results.append(check("scan slope", abs(abs(slope) - 25.5) < 0.5, f"{slope:.3f} Hz per V/cm"))

    t2 = c.t2_star(1e5)
    grid = [3 * t2 * k / 399 for k in range(400)]
    fit = nvsim.ensemble_dephasing_trace(c, d, 1e5, grid, seed=2026).fit_damped_sinusoid()
    dev = fit.t2_star_s / t2 - 1
    results.append(check("ensemble T2*", abs(dev) < 0.03, f"{fit.t2_star_s:.4e} s ({dev:+.2%})"))

    kappas = [1.0, 2.0, 20.0, 33.0, 80.0]
    rates = [math.hypot(2.5e5, 1.5e6 * 6.7 / (5.7 + k)) for k in kappas]
    dfit = nvsim.fit_dielectric_model(kappas, rates)
    results.append(check("dielectric fit", abs(dfit.noise_floor / 2.5e5 - 1) < 1e-6
                         and abs(dfit.surface_amplitude / 1.5e6 - 1) < 1e-6, repr(dfit)))

    try:
        nvsim.DriveParameters(2.0, 16.0)
        results.append(check("hierarchy rejected", False))
    except ValueError as e:
        results.append(check("hierarchy rejected", "hierarchy" in str(e)))

    print(f"{sum(results)}/{len(results)} checks passed")
    raise SystemExit(0 if all(results) else 1)


if __name__ == "__main__":
    main()
