"""Acceptance gate: one test per criterion, at the stated tolerances.

The conftest prints one PASS/FAIL line per criterion at the end of the run.
"""

import csv
import io
import json

import numpy as np
import pytest

from decegy import (
    Category,
    Codec,
    FeatureVector,
    HL1Params,
    SpecificEnergies,
    SynthSpec,
    build_feature_set,
    category_breakdown,
    cross_validate,
    default_specific_energies,
    export_dataset,
    feature_linear_system,
    fit_hl1,
    fit_linear_ls,
    fit_trust_region,
    hl1_residuals_jacobian,
    load_dataset,
    make_folds,
    mean_relative_error,
    predict_feature_model,
    synth_dataset,
)
from decegy.cli import main as cli_main
from decegy.trace import (
    Coefficient,
    FrameStart,
    InterBlock,
    IntraBlock,
    SaoBlock,
    TransformBlock,
    analyze,
    coeff_value_contribution,
    map_inter_block,
    pel_and_frac_counts,
)
from decegy.taxonomy import EntropyMode
from util import hl1_records, random_trace


def test_criterion_1_taxonomy_ground_truth():
    expected = {
        Codec.H263: (
            "e0", "frame", "intra16", "inter16", "inter8", "obmc", "pel",
            "frac", "trans8", "coeff", "val",
        ),
        Codec.H264: (
            "e0", "frame", "intra16", "intra4", "inter16", "inter8", "inter4",
            "pel", "frac", "trans4", "coeff_cavlc", "coeff_cabac",
            "val_cavlc", "val_cabac",
        ),
        Codec.HEVC: (
            "e0", "frame", "intra32", "intra16", "intra8", "intra4",
            "inter64", "inter32", "inter16", "inter8", "pel", "frac",
            "trans32", "trans16", "trans8", "trans4", "coeff", "val", "sao",
        ),
        Codec.VP9: (
            "e0", "frame", "intra32", "intra16", "intra8", "intra4",
            "inter64", "inter32", "inter16", "inter8", "inter4", "pel",
            "frac", "trans32", "trans16", "trans8", "trans4", "coeff", "val",
        ),
    }
    cardinalities = {Codec.H263: 11, Codec.H264: 14, Codec.HEVC: 19, Codec.VP9: 19}
    for codec in Codec:
        fs = build_feature_set(codec)
        assert len(fs) == cardinalities[codec]
        assert fs.names == expected[codec]


def test_criterion_2_oracle_recovery_feature_model():
    true = default_specific_energies(Codec.HEVC)
    dataset = synth_dataset(SynthSpec(Codec.HEVC, 200, seed=1))
    coeffs, _ = fit_linear_ls(feature_linear_system(dataset.records))
    max_rel_dev = float(np.max(np.abs(coeffs - true.values) / true.values))
    assert max_rel_dev < 1e-6
    report = cross_validate(dataset, "feature", k=10, seed=42)
    assert report.overall_error < 1e-8


def test_criterion_3_noise_behavior():
    for seed in range(20):
        dataset = synth_dataset(SynthSpec(Codec.HEVC, 500, noise_sigma=0.05, seed=seed))
        report = cross_validate(dataset, "feature", k=10, seed=seed)
        # folded-normal mean |eta| = 0.05*sqrt(2/pi) = 0.0399
        assert 0.03 <= report.overall_error <= 0.05, (seed, report.overall_error)


def _fd_jacobian(params_vec, records, rel_step=1e-6):
    def residuals(vec):
        r, _ = hl1_residuals_jacobian(HL1Params(*vec), records)
        return r

    J = np.empty((len(records), 4))
    for j in range(4):
        h = rel_step * max(abs(params_vec[j]), 1e-9)
        plus = np.array(params_vec, dtype=float)
        minus = np.array(params_vec, dtype=float)
        plus[j] += h
        minus[j] -= h
        J[:, j] = (residuals(plus) - residuals(minus)) / (2.0 * h)
    return J


def test_criterion_4_hl1_correctness():
    rng = np.random.default_rng(99)
    # analytic Jacobian vs central finite differences on 100 random instances
    worst = 0.0
    for _ in range(100):
        params_vec = [
            float(rng.uniform(0.01, 2.0)),
            float(10.0 ** rng.uniform(-9, -7)),
            float(10.0 ** rng.uniform(-8, -6)),
            float(rng.uniform(0.3, 2.0)),
        ]
        records = hl1_records(rng, 20, HL1Params(*params_vec))
        _, analytic = hl1_residuals_jacobian(HL1Params(*params_vec), records)
        fd = _fd_jacobian(params_vec, records)
        scale = np.maximum(np.max(np.abs(analytic), axis=0), 1e-300)
        worst = max(worst, float(np.max(np.abs(analytic - fd) / scale)))
    assert worst < 1e-4

    # noise-free parameter recovery
    truth = HL1Params(0.4, 2.1e-8, 1.3e-7, 0.7)
    records = hl1_records(rng, 100, truth)
    fitted, _ = fit_hl1(records)
    assert abs(fitted.base_joules - truth.base_joules) / truth.base_joules < 1e-3
    assert abs(fitted.per_pixel_joules - truth.per_pixel_joules) / truth.per_pixel_joules < 1e-3
    assert abs(fitted.rate_coeff - truth.rate_coeff) / truth.rate_coeff < 1e-3
    assert abs(fitted.rate_power - truth.rate_power) < 1e-3

    # classical Rosenbrock residual test
    def residual(v):
        return np.array([10.0 * (v[1] - v[0] ** 2), 1.0 - v[0]])

    def jacobian(v):
        return np.array([[-20.0 * v[0], 10.0], [-1.0, 0.0]])

    x, _ = fit_trust_region(residual, jacobian, [-1.2, 1.0])
    assert np.max(np.abs(x - 1.0)) < 1e-6


def test_criterion_5_hl2_correctness():
    from decegy import CollinearityWarning, HL2Params, fit_hl2
    from util import hl2_records

    rng = np.random.default_rng(12)
    truth = HL2Params(3e-9, 6e-8, 2e-9, 1.2e-8)
    records = [
        (info, e * (1.0 + rng.normal(0, 0.05)))
        for info, e in hl2_records(rng, 80, truth)
    ]
    fitted, _ = fit_hl2(records)
    pixels = np.array([i.pixels_per_frame * i.frames for i, _ in records])
    sizes = np.array([i.file_size_bytes for i, _ in records])
    intra = np.array([i.intra_rate for i, _ in records])
    A = np.column_stack([intra * sizes, intra * pixels, sizes, pixels])
    y = np.array([e for _, e in records])
    oracle = np.linalg.solve(A.T @ A, A.T @ y)
    assert np.max(np.abs(np.asarray(fitted.as_tuple()) - oracle) / np.abs(oracle)) < 1e-8

    all_intra = [
        (type(info)(info.pixels_per_frame, info.frames, info.file_size_bytes, 1.0), e)
        for info, e in records
    ]
    with pytest.warns(CollinearityWarning):
        fit_hl2(all_intra)


def test_criterion_6_model_ordering():
    wins = 0
    for seed in range(20):
        dataset = synth_dataset(SynthSpec(Codec.HEVC, 200, noise_sigma=0.05, seed=1000 + seed))
        eps = {
            kind: cross_validate(dataset, kind, k=10, seed=seed).overall_error
            for kind in ("feature", "hl1", "hl2")
        }
        if eps["feature"] < eps["hl1"] and eps["feature"] < eps["hl2"]:
            wins += 1
    assert wins >= 19, f"feature model won only {wins}/20 seeds"


def test_criterion_7_analyzer_counting_rules():
    # half-weight rectangular mapping
    [(fid, weight)] = map_inter_block(Codec.H264, 8, 16)
    assert (fid.name, weight) == ("inter16", 0.5)
    [(fid, weight)] = map_inter_block(Codec.VP9, 4, 8)
    assert (fid.name, weight) == ("inter8", 0.5)
    # biprediction doubles pels; frac counts one filtering per pel and dimension
    assert pel_and_frac_counts(InterBlock(8, 8, bipred=True)) == (128.0, 0.0)
    assert pel_and_frac_counts(InterBlock(16, 16, frac_h=True)) == (256.0, 256.0)
    assert pel_and_frac_counts(
        InterBlock(8, 8, bipred=True, frac_h=True, frac_v=True)
    ) == (128.0, 256.0)
    # OBMC routing replaces the inter size feature but keeps pels
    from decegy.trace import DecodeTrace

    obmc_vec = analyze(
        DecodeTrace("o", Codec.H263, (FrameStart(), InterBlock(16, 16, obmc=True)))
    )
    assert obmc_vec["obmc"] == 1.0
    assert obmc_vec["inter16"] == 0.0
    assert obmc_vec["pel"] == 256.0
    # HEVC val sums exact log2 magnitudes; other codecs sum coded bits
    assert coeff_value_contribution(Codec.HEVC, 4, 99) == 2.0
    assert coeff_value_contribution(Codec.HEVC, -2, 99) == 1.0
    assert coeff_value_contribution(Codec.HEVC, 1, 99) == 0.0
    assert coeff_value_contribution(Codec.H264, -3, 5) == 5.0
    # CAVLC/CABAC routing
    h264_vec = analyze(
        DecodeTrace(
            "h",
            Codec.H264,
            (
                FrameStart(),
                Coefficient(3, 5, EntropyMode.CAVLC),
                Coefficient(2, 4, EntropyMode.CABAC),
            ),
        )
    )
    assert h264_vec["coeff_cavlc"] == 1.0 and h264_vec["coeff_cabac"] == 1.0
    assert h264_vec["val_cavlc"] == 5.0 and h264_vec["val_cabac"] == 4.0
    # SAO counting and fixed offset
    sao_vec = analyze(DecodeTrace("s", Codec.HEVC, (FrameStart(), SaoBlock(), SaoBlock())))
    assert sao_vec["sao"] == 2.0
    assert sao_vec["e0"] == 1.0
    empty_vec = analyze(DecodeTrace("e", Codec.VP9, ()))
    assert empty_vec["e0"] == 1.0


def test_criterion_8_pipeline_round_trip(tmp_path):
    rng = np.random.default_rng(2024)
    # traces -> analyze
    trace_paths = []
    for i in range(60):
        trace = random_trace(
            Codec.HEVC, rng, n_frames=int(rng.integers(1, 6)), blocks_per_frame=10
        )
        lines = [json.dumps({"stream_id": f"trace-{i:03d}", "codec": "hevc"})]
        for ev in trace.events:
            if isinstance(ev, FrameStart):
                lines.append('{"event":"frame_start"}')
            elif isinstance(ev, IntraBlock):
                lines.append(json.dumps({"event": "intra", "w": ev.w, "h": ev.h}))
            elif isinstance(ev, InterBlock):
                lines.append(
                    json.dumps(
                        {
                            "event": "inter", "w": ev.w, "h": ev.h,
                            "bipred": ev.bipred, "frac_h": ev.frac_h,
                            "frac_v": ev.frac_v, "obmc": ev.obmc,
                        }
                    )
                )
            elif isinstance(ev, TransformBlock):
                lines.append(json.dumps({"event": "transform", "w": ev.w, "h": ev.h}))
            elif isinstance(ev, Coefficient):
                lines.append(
                    json.dumps({"event": "coeff", "value": ev.value, "bits": ev.coded_bits})
                )
            elif isinstance(ev, SaoBlock):
                lines.append('{"event":"sao"}')
        path = tmp_path / f"trace-{i:03d}.jsonl"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        trace_paths.append(str(path))

    analyzed_csv = tmp_path / "analyzed.csv"
    assert cli_main(["analyze", *trace_paths, "--out", str(analyzed_csv)]) == 0

    # merge noise-free synthetic energies into the energy column
    true = default_specific_energies(Codec.HEVC)
    with open(analyzed_csv, encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    header = rows[0]
    energy_col = header.index("energy_joules")
    feature_cols = [header.index(name) for name in true.feature_set.names]
    for row in rows[1:]:
        counts = np.array([float(row[c]) for c in feature_cols])
        vector = FeatureVector(true.feature_set, counts)
        row[energy_col] = repr(predict_feature_model(true, vector))
    merged_csv = tmp_path / "merged.csv"
    with open(merged_csv, "w", encoding="utf-8", newline="") as handle:
        csv.writer(handle, lineterminator="\n").writerows(rows)

    # fit -> predict reproduces the merged energies
    params_path = tmp_path / "params.json"
    pred_csv = tmp_path / "pred.csv"
    assert cli_main(["fit", "--dataset", str(merged_csv), "--out", str(params_path)]) == 0
    assert cli_main(
        ["predict", "--dataset", str(merged_csv), "--params", str(params_path), "--out", str(pred_csv)]
    ) == 0
    with open(pred_csv, encoding="utf-8") as handle:
        pred_rows = list(csv.reader(handle))
    e_col = pred_rows[0].index("energy_joules")
    for row in pred_rows[1:]:
        energy = float(row[e_col])
        estimate = float(row[-1])
        assert abs(estimate - energy) / energy < 1e-9

    # dataset export/load round-trip identity (both formats)
    dataset = load_dataset(merged_csv)
    for fmt in ("csv", "json"):
        path = tmp_path / f"roundtrip.{fmt}"
        export_dataset(dataset, path)
        assert load_dataset(path) == dataset


def test_criterion_9_evaluation_properties():
    # fold partitions: disjoint, covering, size spread <= 1
    rng = np.random.default_rng(31)
    for _ in range(1000):
        m = int(rng.integers(2, 400))
        k = int(rng.integers(2, m + 1))
        partition = make_folds(m, k, seed=int(rng.integers(0, 2**31)))
        covered = np.concatenate([partition.fold_indices(i) for i in range(k)])
        assert sorted(covered.tolist()) == list(range(m))
        sizes = partition.fold_sizes()
        assert max(sizes) - min(sizes) <= 1

    # scale invariance of the error metric
    est = rng.uniform(0.5, 2.0, size=100)
    meas = rng.uniform(0.5, 2.0, size=100)
    base = mean_relative_error(est, meas)
    for factor in (1e-9, 0.5, 7.0, 1e12):
        assert mean_relative_error(factor * est, factor * meas) == pytest.approx(
            base, rel=1e-12
        )

    # breakdown sums equal totals
    for codec in Codec:
        fs = build_feature_set(codec)
        for _ in range(25):
            energies = SpecificEnergies(fs, rng.uniform(0, 1e-2, size=len(fs)))
            vector = FeatureVector(fs, rng.uniform(0, 1e8, size=len(fs)))
            total = predict_feature_model(energies, vector)
            split = category_breakdown(energies, vector)
            assert sum(split.values()) == pytest.approx(total, rel=1e-9)
            assert set(split) == set(Category)
