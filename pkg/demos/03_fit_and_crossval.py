#!/usr/bin/env python3
"""Fit all three predictors and compare them by cross-validation.

Synthetic data stands in for physical measurements: feature counts are drawn
per stream, energies computed from known per-feature specific energies, and
5% multiplicative noise added. The feature-based model can represent the
generating process, so its cross-validated error sits at the noise floor;
the two high-level baselines (resolution/frames/file-size, plus intra rate)
cannot, and land far above it.
"""

import numpy as np

from decegy import (
    Codec,
    SynthSpec,
    cross_validate,
    default_specific_energies,
    feature_linear_system,
    fit_linear_ls,
    synth_dataset,
)

dataset = synth_dataset(SynthSpec(Codec.HEVC, count=400, noise_sigma=0.05, seed=7))
print(f"dataset: {len(dataset)} synthetic {dataset.codec.value} streams, 5% noise\n")

# one full-data fit, recovered vs generating specific energies
true = default_specific_energies(Codec.HEVC)
coeffs, diagnostics = fit_linear_ls(feature_linear_system(dataset.records))
deviation = np.abs(coeffs - true.values) / true.values
print(
    f"full-data fit vs truth: median deviation {np.median(deviation):.2%}, "
    f"worst {np.max(deviation):.2%}"
)
print("(rarely exercised features are poorly determined under noise;")
print(" their small energy share keeps predictions accurate regardless)")
print(f"residual norm {diagnostics.residual_norm:.3e}, rank {diagnostics.rank}\n")

print("10-fold cross-validation (seed 42):")
print(f"{'model':<9} {'eps_mean':>9}")
for kind in ("feature", "hl1", "hl2"):
    report = cross_validate(dataset, kind, k=10, seed=42)
    print(f"{kind:<9} {100.0 * report.overall_error:>8.2f}%")

print("\nnoise floor: E|eta| = 0.05*sqrt(2/pi) =", f"{0.05 * np.sqrt(2 / np.pi):.2%}")
