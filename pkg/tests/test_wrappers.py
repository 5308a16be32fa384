import itertools

import numpy as np
import pytest

from spatial_se.losses import (
    CAP_DB, SNR, SISNR, LossBatch, MixingMatrix, MtlSpec, Permutation, build_wrapper, fixed_wrap,
    mixit_wrap, mtl_combine, pit_wrap,
)


def _sources(rng, s, n=64):
    return [rng.standard_normal(n) for _ in range(s)]


def test_permutation_and_mixing_matrix_invariants():
    with pytest.raises(ValueError):
        Permutation((0, 0))
    with pytest.raises(ValueError):
        MixingMatrix(np.array([[1, 1], [1, 0]]))
    a = MixingMatrix.from_assignment((1, 0, 1), 2)
    np.testing.assert_array_equal(a.matrix, [[0, 1, 0], [1, 0, 1]])


def test_pit_single_source_is_bare_criterion(rng):
    ref, est = _sources(rng, 2)
    report = pit_wrap(SISNR(), [ref], [est])
    assert report.value == pytest.approx(-SISNR()(ref, est))
    assert report.assignment == Permutation((0,))
    assert report.score == pytest.approx(SISNR()(ref, est))


def test_pit_recovers_swap(rng):
    a, b = _sources(rng, 2)
    report = pit_wrap(SISNR(), [a, b], [b, a])
    assert report.assignment.mapping == (1, 0)
    assert report.value == -CAP_DB


def test_pit_matches_brute_force_three_sources(rng):
    refs = _sources(rng, 3)
    order = rng.permutation(3)
    ests = [refs[i] + 0.3 * rng.standard_normal(64) for i in order]
    c = SNR()
    brute = min(
        (np.mean([c.loss(refs[i], ests[p[i]]) for i in range(3)]), p)
        for p in itertools.permutations(range(3))
    )
    report = pit_wrap(c, refs, ests)
    assert report.value == pytest.approx(brute[0], abs=1e-12)
    assert report.assignment.mapping == brute[1]


@pytest.mark.slow
@pytest.mark.parametrize("s", [2, 3, 4])
def test_hungarian_equals_exhaustive(rng, s):
    c = SNR()
    for _ in range(200):
        refs = _sources(rng, s, 32)
        ests = [refs[i] + rng.uniform(0.2, 2.0) * rng.standard_normal(32) for i in rng.permutation(s)]
        ex = pit_wrap(c, refs, ests, "exhaustive")
        hu = pit_wrap(c, refs, ests, "hungarian")
        assert hu.value == pytest.approx(ex.value, abs=1e-12)
        identity = fixed_wrap(c, refs, ests)
        assert ex.value <= identity.value + 1e-12


def test_pit_is_invariant_to_estimate_shuffles(rng):
    refs = _sources(rng, 4)
    ests = [r + rng.standard_normal(64) for r in refs]
    base = pit_wrap(SISNR(), refs, ests).value
    for perm in ([3, 1, 0, 2], [1, 2, 3, 0]):
        assert pit_wrap(SISNR(), refs, [ests[i] for i in perm]).value == pytest.approx(base, abs=1e-12)


def test_pit_size_mismatch(rng):
    with pytest.raises(ValueError):
        pit_wrap(SISNR(), _sources(rng, 2), _sources(rng, 3))


def test_mixit_single_mixture(rng):
    e1, e2 = _sources(rng, 2)
    report = mixit_wrap(SISNR(), [e1 + e2], [e1, e2])
    np.testing.assert_array_equal(report.assignment.matrix, [[1, 1]])
    assert report.value == -CAP_DB


def test_mixit_identity(rng):
    m1, m2 = _sources(rng, 2)
    report = mixit_wrap(SISNR(), [m1, m2], [m1, m2])
    np.testing.assert_array_equal(report.assignment.matrix, np.eye(2, dtype=int))
    assert report.value == -CAP_DB


@pytest.mark.slow
@pytest.mark.parametrize("m", [2, 3, 4])
def test_mixit_recovers_generating_partition(rng, m):
    c = SISNR()
    for _ in range(100):
        while True:
            assign = tuple(int(a) for a in rng.integers(0, 2, size=m))
            if len(set(assign)) == 2:
                break
        sources = np.stack(_sources(rng, m, 48))
        truth = MixingMatrix.from_assignment(assign, 2)
        mixtures = list(truth.remix(sources))
        report = mixit_wrap(c, mixtures, list(sources))
        np.testing.assert_array_equal(report.assignment.matrix, truth.matrix)
        for cand in itertools.product(range(2), repeat=m):
            remix = MixingMatrix.from_assignment(cand, 2).remix(sources)
            v = np.mean([c.loss(x, y) for x, y in zip(mixtures, remix)])
            assert report.value <= v + 1e-12


def test_mixit_budget_and_shape(rng):
    with pytest.raises(ValueError):
        mixit_wrap(SISNR(), _sources(rng, 2), _sources(rng, 13))
    with pytest.raises(ValueError):
        mixit_wrap(SISNR(), _sources(rng, 3), _sources(rng, 2))


def test_build_wrapper():
    assert build_wrapper("pit", SISNR()).name == "pit"
    with pytest.raises(ValueError):
        build_wrapper("greedy", SISNR())


def test_mtl_weighted_sum():
    batch = LossBatch(
        ref_masks=[np.full((2, 2), np.sqrt(2.0))], est_masks=[np.zeros((2, 2))],
        ref_specs=[np.full((2, 3), np.sqrt(3.0))], est_specs=[np.zeros((2, 3))],
    )
    spec = MtlSpec.from_records([
        {"wrapper": "fixed", "criterion": "mse_mask", "weight": 0.5},
        {"wrapper": "fixed", "criterion": "mse_spectrum", "weight": 2.0},
    ])
    result = mtl_combine(spec, batch)
    assert result.total == pytest.approx(7.0)
    assert [label for label, _, _ in result.breakdown] == ["fixed:mse_mask", "fixed:mse_spectrum"]


def test_mtl_zero_weight_and_single_entry(rng):
    ref, est = _sources(rng, 2)
    batch = LossBatch(refs=[ref], ests=[est])
    single = mtl_combine(MtlSpec.from_records([{"wrapper": "pit", "criterion": "si_snr"}]), batch)
    assert single.total == pytest.approx(-SISNR()(ref, est))
    two = mtl_combine(MtlSpec.from_records([
        {"wrapper": "pit", "criterion": "si_snr", "weight": 1.0},
        {"wrapper": "fixed", "criterion": "snr", "weight": 0.0},
    ]), batch)
    assert two.total == pytest.approx(single.total)


def test_mtl_records_round_trip_and_errors():
    records = [{"wrapper": "pit", "criterion": "ci_sdr", "params": {"filter_taps": 32}, "weight": 0.5}]
    assert MtlSpec.from_records(records).to_records() == records
    with pytest.raises(ValueError):
        MtlSpec.from_records([])
    with pytest.raises(ValueError):
        MtlSpec.from_records([{"wrapper": "pit", "criterion": "si_snr", "scale": 2}])
    with pytest.raises(ValueError):
        MtlSpec.from_records([{"wrapper": "pit"}])
    with pytest.raises(ValueError):
        MtlSpec.from_records([{"wrapper": "pit", "criterion": "si_snr", "weight": -1}])


def test_mtl_missing_view(rng):
    spec = MtlSpec.from_records([{"wrapper": "fixed", "criterion": "mse_mask"}])
    with pytest.raises(ValueError, match="mask"):
        mtl_combine(spec, LossBatch(refs=_sources(rng, 1), ests=_sources(rng, 1)))
