import hashlib
import logging
from dataclasses import replace

import numpy as np
import pytest

from superradiance.cloud import CloudGeometry
from superradiance.ensemble import (
    CHUNK_SIZE,
    Drive,
    EnsembleError,
    EnsembleResult,
    EnsembleSpec,
    compare_to_randomwalk,
    derive_seed,
    evaluate_configuration,
    overlay,
    run_ensemble,
    run_ensemble_multi,
)
from superradiance.excitation import Pulse
from superradiance.fluorescence import POLARIZATIONS, angular_scan, decay_rate
from superradiance.randomwalk import RandomWalkModel

SPHERE = CloudGeometry(0.005, 8, 8)
SMALL = EnsembleSpec(SPHERE, n_configs=40, master_seed=3, thetas=(0.0, 1.0, np.pi), phis=(0.0, 2.0),
                     polarizations=POLARIZATIONS, times=(0.0, 0.01, 0.1, 1.0), windows=((0.0, 0.01), (0.0, 0.1)))


@pytest.fixture(scope="module")
def small_result():
    return run_ensemble(replace(SMALL, keep_samples=True))


def test_derive_seed_is_documented_hash():
    digest = hashlib.blake2b(b"7:12", digest_size=8).digest()
    assert derive_seed(7, 12) == int.from_bytes(digest, "little") >> 1
    assert 0 <= derive_seed(2**40, 10**6) < 2**63
    assert len({derive_seed(0, i) for i in range(1000)}) == 1000


def test_spec_validation():
    with pytest.raises(ValueError):
        EnsembleSpec(SPHERE, n_configs=0)
    with pytest.raises(ValueError):
        EnsembleSpec(SPHERE, n_configs=1, thetas=(4.0,))
    with pytest.raises(ValueError):
        EnsembleSpec(SPHERE, n_configs=1, windows=((0.1, 0.1),))
    with pytest.raises(ValueError):
        EnsembleSpec(SPHERE, n_configs=1, polarizations=("diagonal",))
    with pytest.raises(ValueError):
        Drive("laser")


def test_window_endpoints_join_time_grid():
    spec = EnsembleSpec(SPHERE, n_configs=1, times=(0.0, 1.0), windows=((0.0, 0.37),))
    assert 0.37 in spec.resolved_times()


def test_single_atom_ensemble():
    spec = EnsembleSpec(SPHERE, n_configs=1, n_atoms=1, thetas=(0.5, 2.0), polarizations=POLARIZATIONS,
                        times=(0.0, 0.01, 1.0), windows=((0.0, 0.01), (0.01, 1.0)))
    res = run_ensemble(spec)
    assert np.all(res.stderr == 0)
    for w in spec.windows:
        assert np.allclose(res.gamma[w], 1.0, atol=1e-9)
        curve = res.decay_curve("total", w)
        assert np.allclose(curve.gamma, 1.0, atol=1e-9)
    assert res.n_configs == 1 and not res.flagged


def test_result_structure(small_result):
    r = small_result
    assert isinstance(r, EnsembleResult)
    assert r.mean.shape == (3, 3, len(r.times))
    assert np.allclose(r.mean[2], r.mean[0] + r.mean[1], rtol=1e-13)
    assert r.samples.shape == (40, 3, 3, len(r.times))
    assert r.provenance["spec"]["master_seed"] == 3
    assert r.provenance["spec"]["n_atoms"] == 40


def test_windowed_gamma_matches_series(small_result):
    s = small_result.series("parallel", 1)
    assert decay_rate(s, 0.0, 0.1) == pytest.approx(small_result.gamma[(0.0, 0.1)][0, 1], rel=1e-12)
    with pytest.raises(KeyError):
        small_result.decay_curve("total", (0.0, 0.5))


def test_configuration_reconstructible_in_isolation(small_result):
    seed, values = evaluate_configuration(SMALL, 17, [SMALL.pulse])
    assert seed == derive_seed(3, 17)
    y = np.concatenate([values[0], values[0][:1] + values[0][1:2]])
    assert np.array_equal(y, small_result.samples[17])


def test_worker_count_does_not_change_result():
    spec = replace(SMALL, n_configs=2 * CHUNK_SIZE + 5)
    a = run_ensemble(spec, workers=1)
    b = run_ensemble(spec, workers=3)
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.stderr, b.stderr)
    for w in spec.windows:
        assert np.array_equal(a.gamma[w], b.gamma[w], equal_nan=True)


def test_stderr_consistent_with_bootstrap(small_result):
    samples = small_result.samples[:, 2, 1]            # total channel, theta = 1
    rng = np.random.default_rng(0)
    boot = np.array([samples[rng.integers(0, len(samples), len(samples))].mean(axis=0) for _ in range(4000)])
    ratio = boot.std(axis=0) / small_result.stderr[2, 1]
    assert np.all(np.abs(ratio - 1) < 0.1)


def test_gamma_stderr_consistent_with_bootstrap(small_result):
    samples = small_result.samples[:, 2, 1]
    i1, i2 = (int(np.flatnonzero(small_result.times == t)[0]) for t in (0.0, 0.1))
    rng = np.random.default_rng(1)
    boot = []
    for _ in range(4000):
        m = samples[rng.integers(0, len(samples), len(samples))].mean(axis=0)
        boot.append(np.log(m[i1] / m[i2]) / 0.1)
    assert np.std(boot) == pytest.approx(small_result.gamma_stderr[(0.0, 0.1)][2, 1], rel=0.15)


def test_stderr_scales_with_sqrt_n():
    base = EnsembleSpec(SPHERE, n_configs=300, thetas=(np.pi / 2,), phis=(0.0, 1.0, 2.0),
                        times=(0.0, 0.1), windows=((0.0, 0.1),))
    e1 = run_ensemble(base).stderr[2, 0, 0]
    e2 = run_ensemble(replace(base, n_configs=600)).stderr[2, 0, 0]
    assert e1 / e2 == pytest.approx(np.sqrt(2), rel=0.2)


def test_multi_pulse_matches_single():
    spec = replace(SMALL, n_configs=6)
    pulses = [Pulse(0.1), Pulse(5.0, 2.0)]
    multi = run_ensemble_multi(spec, pulses)
    for p, res in zip(pulses, multi):
        single = run_ensemble(replace(spec, pulse=p))
        assert np.array_equal(res.mean, single.mean)
        assert res.pulse == p


def test_all_rejected_raises(caplog):
    spec = replace(SMALL, n_configs=3, tol=1e-30)
    with caplog.at_level(logging.WARNING, logger="superradiance.ensemble"):
        with pytest.raises(EnsembleError):
            run_ensemble(spec)
    for i in range(3):
        assert str(derive_seed(3, i)) in caplog.text


def test_rejection_flag():
    res = run_ensemble(replace(SMALL, n_configs=2))
    res.n_rejected = 1
    assert res.flagged
    res.n_rejected = 0
    assert not res.flagged


def test_incoherent_sphere_is_isotropic():
    spec = EnsembleSpec(SPHERE, n_configs=150, drive=Drive("incoherent"), thetas=(0.3, 1.2, 2.0, 2.8),
                        phis=(0.0, 2.1, 4.2), times=(0.0, 0.1), windows=((0.0, 0.1),))
    res = run_ensemble(spec)
    curve = res.decay_curve("total", (0.0, 0.1))
    mean = np.average(curve.gamma, weights=curve.stderr**-2)
    assert np.all(np.abs(curve.gamma - mean) < 4 * curve.stderr)


def test_angular_scan_helper():
    spec = EnsembleSpec(SPHERE, n_configs=1, n_atoms=1)
    curve = angular_scan(spec, "perpendicular", [0.5, 1.5, 3.0], (0.0, 0.2))
    assert np.allclose(curve.gamma, 1.0, atol=1e-9)
    assert curve.label == "perpendicular" and curve.interval == (0.0, 0.2)


def test_overlay_guards(small_result):
    model = RandomWalkModel(SPHERE)
    with pytest.raises(ValueError):
        overlay([0.0, 0.1, np.pi], [1.0, 1.0, 1.0], model, (0.0, 0.01))
    with pytest.raises(ValueError):
        compare_to_randomwalk(small_result, RandomWalkModel(CloudGeometry(0.005, 8, 9)), (0.0, 0.01))
    table = compare_to_randomwalk(small_result, model, (0.0, 0.01))
    assert list(table.sideward) == [False, True, False]
    assert table.max_deviation == pytest.approx(abs(table.deviation[1]))
    assert len(table.rows()) == 3
