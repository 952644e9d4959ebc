#!/usr/bin/env python3
"""Smoke test for the photonstat_py extension module.

Builds are loaded straight from the cargo target directory, so run

    cargo build -p photonstat-py --release

first (a debug build works too), then `python3 python/smoke_test.py`.
"""

import importlib.util
import math
import pathlib
import sys


def load_module():
    root = pathlib.Path(__file__).resolve().parents[1]
    candidates = []
    for profile in ("release", "debug"):
        for stem in ("libphotonstat_py.so", "photonstat_py.so", "libphotonstat_py.dylib"):
            candidates.append(root / "target" / profile / stem)
    for so in candidates:
        if so.exists():
            spec = importlib.util.spec_from_file_location("photonstat_py", so)
            module = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(module)
            print(f"loaded {so}")
            return module
    sys.exit("photonstat_py not built; run: cargo build -p photonstat-py --release")


def check(name, condition, detail=""):
    if not condition:
        sys.exit(f"FAIL {name} {detail}")
    print(f"PASS {name}{' ' + detail if detail else ''}")


def main():
    ps = load_module()

    # Distribution constructors against closed forms.
    coherent = ps.make_coherent(0.02, 8)
    check(
        "coherent weights",
        abs(coherent.probs[0] - math.exp(-0.02)) < 1e-12
        and abs(coherent.probs[1] - 0.02 * math.exp(-0.02)) < 1e-12,
    )
    check("coherent mean", abs(coherent.mean_photon_number() - 0.02) < 1e-8)

    thermal = ps.make_thermal(0.74, 30)
    check("thermal klyshko", abs(ps.klyshko(thermal, 1) - 2.0) < 1e-12)
    check("poisson klyshko", abs(ps.klyshko(coherent, 1) - 1.0) < 1e-12)

    # Forward model against the analytic coherent-state law.
    p0 = ps.no_click_probability(coherent, 0.5)
    check("no-click oracle", abs(p0 - math.exp(-0.5 * 0.02)) < 1e-9)

    # Simulate, reconstruct, and compare with the truth.
    grid = ps.EfficiencyGrid.equally_spaced(15, 0.66)
    data = ps.simulate_dataset(coherent, grid, [200_000] * 15, seed=7)
    again = ps.simulate_dataset(coherent, grid, [200_000] * 15, seed=7)
    check("simulation determinism", data.no_click_counts == again.no_click_counts)

    config = ps.EmConfig(truncation=8, max_iterations=30_000)
    result = ps.reconstruct(data, config, reference=coherent)
    fid = ps.fidelity(result.rho, coherent)
    check("reconstruction fidelity", fid > 0.999, f"(fidelity {fid:.6f})")
    check(
        "trace carries fidelity",
        all(0.0 <= row[3] <= 1.0 for row in result.trace),
    )

    report = ps.confidence_intervals(result, data)
    check(
        "uncertainties finite",
        len(report.delta_rho) == 9 and all(d >= 0 for d in report.delta_rho),
    )

    fit = ps.fit_model(result.rho, report, "coherent", mu_min=1e-6, mu_max=0.5)
    mu = dict(fit.fitted_parameters)["mean"]
    check("coherent fit", abs(mu - 0.02) < 0.005, f"(fitted mean {mu:.5f})")

    # Heralded single photon: strongly nonclassical Klyshko parameter.
    rho1 = (1 - 0.027) / (1 + 0.0185)
    heralded = ps.make_mixture(
        [
            (0.027, ps.make_fock(0, 6)),
            (rho1, ps.make_fock(1, 6)),
            (0.0185 * rho1, ps.make_fock(2, 6)),
        ]
    )
    k1 = ps.klyshko(heralded, 1)
    check("heralded nonclassical", k1 < 1.0, f"(K_1 = {k1:.3e})")

    # Dataset CSV round trip through a temp file.
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        path = str(pathlib.Path(tmp) / "data.csv")
        ps.save_dataset(data, path)
        back = ps.load_dataset(path)
        check("csv round trip", back.no_click_counts == data.no_click_counts)

    print("smoke test passed")


if __name__ == "__main__":
    main()
