#!/usr/bin/env python3
"""Smoke test for the pfpca extension module.

Build the module first, then run this script from anywhere:

    cargo build --release -p pfpca-py
    python3 python/smoke_test.py
"""
import importlib.machinery
import importlib.util
import json
import pathlib
import sys

import numpy as np


def load_module():
    root = pathlib.Path(__file__).resolve().parents[1]
    candidates = [
        root / "target" / "release" / "libpfpca.so",
        root / "target" / "debug" / "libpfpca.so",
    ]
    for path in candidates:
        if path.exists():
            loader = importlib.machinery.ExtensionFileLoader("pfpca", str(path))
            spec = importlib.util.spec_from_loader("pfpca", loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            return module
    sys.exit("extension not found; run: cargo build --release -p pfpca-py")


def check(name, condition):
    if not condition:
        sys.exit(f"FAILED: {name}")
    print(f"ok: {name}")


pfpca = load_module()

# penalty operator on the 3-point hand fixture
model = pfpca.PenaltyModel(np.array([0.0, 1.0, 2.0]))
omega = model.omega()
expected = 1.5 * np.array([[1.0, -2.0, 1.0], [-2.0, 4.0, -2.0], [1.0, -2.0, 1.0]])
check("omega hand value", np.allclose(omega, expected, atol=1e-12))
check("two null eigenvalues", np.sum(model.eigenvalues == 0.0) == 2)
check("trace at alpha=0", abs(model.smoother_trace(0.0) - 3.0) < 1e-12)

w = np.array([0.3, -1.0, 2.0])
check("smoother identity at 0", np.allclose(model.smooth(0.0, w), w, atol=1e-12))
twice = model.half_smooth(2.0, model.half_smooth(2.0, w))
check("half-smoother squares", np.allclose(twice, model.smooth(2.0, w), atol=1e-10))

# natural cubic spline hand values
spline = pfpca.Spline(np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.0, 0.0]))
check("spline second derivative", abs(spline.second_derivs[1] + 3.0) < 1e-12)
check("spline midpoint value", abs(spline.evaluate(0.5) - 0.6875) < 1e-12)
check("roughness identity", abs(spline.roughness(model) - 6.0) < 1e-12)
left = np.array([-3.0, -2.0, -1.0])
vals = spline.evaluate_many(left)
check("linear extrapolation", abs(vals[0] - 2 * vals[1] + vals[2]) < 1e-12)

# two-factor synthetic data: MPDC recovers the smooth factors
rng = np.random.default_rng(7)
m, n = 41, 80
times = np.linspace(-1.0, 1.0, m)
v1, v2 = pfpca.true_components(times)
u1 = rng.normal(0.0, 20.0, n)
u2 = rng.normal(0.0, 10.0, n)
x = np.outer(u1, v1) + np.outer(u2, v2) + rng.normal(0.0, 2.0, (n, m))

fit = pfpca.mpdc(x, times, 2, criterion="cv", center=False)
check("two components", fit.n_components == 2)
check("unit loadings", np.allclose(np.linalg.norm(fit.loadings, axis=1), 1.0, atol=1e-10))
check("loading 1 recovered", abs(fit.loadings[0] @ v1) > 0.99)
check("loading 2 recovered", abs(fit.loadings[1] @ v2) > 0.99)
fractions = fit.variance_fractions
check("variance ordered", fractions[0] > fractions[1] > 0.0)
alphas, scores, chosen = fit.trace(0)
check("trace chose its minimum", scores[chosen] == np.min(scores))
curve = fit.loading_spline(0)
check("spline matches knots", abs(curve(times[3]) - fit.loadings[0][3]) < 1e-12)

# CV identity against the leave-one-column refit oracle
xs = rng.normal(size=(10, 8))
us = rng.normal(size=10)
ts = np.linspace(0.0, 1.0, 8)
for alpha in (0.1, 1.0, 10.0):
    cv = pfpca.cv_score(xs, us, ts, alpha)
    oracle = pfpca.cv_oracle(xs, us, ts, alpha)
    check(f"cv identity at alpha={alpha}", abs(cv - us @ us * oracle) < 1e-8 * abs(cv))

# SPDR at alpha = 0 is plain PCA
plain = pfpca.spdr(x, times, 2, alphas=[0.0], center=False)
_, _, vt = np.linalg.svd(x, full_matrices=False)
for k in range(2):
    check(f"spdr component {k + 1} is a singular vector",
          abs(plain.loadings[k] @ vt[k]) > 1.0 - 1e-8)

check("sign test", abs(pfpca.sign_test([1.0] * 10) - 2.0 / 1024.0) < 1e-12)

report = json.loads(pfpca.run_study(n=16, m=16, replicates=2, seed=3))
check("study report", report["config"]["replicates"] == 2
      and len(report["per_replicate"]) == 2)

doc = json.loads(fit.to_json())
check("result json", doc["format_version"] == 1 and len(doc["components"]) == 2)

print("smoke test passed")
