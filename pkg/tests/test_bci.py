"""Decoder chain tests: spatial filter, spectra, feature ranking, the
Gaussian model, evidence integration and the full online loop."""
import json
import math

import numpy as np
import pytest
from scipy import stats

from teleosim.bci import (
    CHANNELS,
    SAMPLE_RATE,
    CalibrationError,
    EegFrame,
    GaussianModel,
    OnlineDecoder,
    PosteriorState,
    PosteriorStream,
    SpectralConfig,
    SyntheticEegConfig,
    calibrate,
    classify,
    fisher_scores,
    generate_trial,
    integrate,
    laplacian,
    load_model,
    maybe_emit,
    neighbor_map,
    save_model,
    select_top_k,
    sliding_windows,
    train_gaussian,
    welch_psd,
)

CFG = SpectralConfig()


def sine_window(freq, amp=1.0, phase=0.0):
    t = np.arange(CFG.n_window) / SAMPLE_RATE
    return amp * np.sin(2 * math.pi * freq * t + phase)


# -- montage ------------------------------------------------------------------

def test_neighbor_map_covers_grid():
    nmap = neighbor_map()
    assert set(nmap) == set(CHANNELS)
    assert nmap["Fz"] == ("FCz",)
    assert set(nmap["FCz"]) == {"Fz", "FC1", "FC2", "Cz"}
    assert set(nmap["C1"]) == {"FC1", "C3", "Cz", "CP1"}
    assert set(nmap["CP4"]) == {"C4", "CP2"}
    for ch, nbrs in nmap.items():
        assert len(nbrs) >= 1
        for nb in nbrs:
            assert ch in nmap[nb]  # symmetry


def test_laplacian_rejects_common_mode():
    data = np.tile(sine_window(10.0), (len(CHANNELS), 1))
    out = laplacian(EegFrame(data=data))
    assert np.allclose(out.data, 0.0, atol=1e-12)


def test_laplacian_single_active_channel():
    nmap = neighbor_map()
    s = sine_window(7.0)
    data = np.zeros((len(CHANNELS), CFG.n_window))
    c1 = CHANNELS.index("C1")
    data[c1] = s
    out = laplacian(EegFrame(data=data))
    for i, ch in enumerate(CHANNELS):
        if ch == "C1":
            want = s  # no energy on its own neighbors
        elif "C1" in nmap[ch]:
            want = -s / len(nmap[ch])
        else:
            want = np.zeros_like(s)
        assert np.allclose(out.data[i], want, atol=1e-12), ch


def test_laplacian_is_linear():
    rng = np.random.default_rng(3)
    x = EegFrame(data=rng.standard_normal((16, 256)))
    y = EegFrame(data=rng.standard_normal((16, 256)))
    both = EegFrame(data=2.5 * x.data - 1.5 * y.data)
    lx, ly, lb = laplacian(x), laplacian(y), laplacian(both)
    assert np.allclose(lb.data, 2.5 * lx.data - 1.5 * ly.data, atol=1e-10)


def test_laplacian_without_neighbors_passes_through():
    rng = np.random.default_rng(4)
    frame = EegFrame(data=rng.standard_normal((16, 128)))
    out = laplacian(frame, nmap={})
    assert np.array_equal(out.data, frame.data)


# -- spectra ------------------------------------------------------------------

def test_spectral_bins_layout():
    assert CFG.n_window == 512 and CFG.n_shift == 32
    assert CFG.nperseg == 256 and CFG.noverlap == 128
    assert np.array_equal(CFG.freqs, np.arange(4.0, 49.0, 2.0))
    assert CFG.n_bins == 23


def test_spectral_config_validation():
    with pytest.raises(ValueError):
        SpectralConfig(shift_s=0.07)
    with pytest.raises(ValueError):
        SpectralConfig(band=(4.0, 47.0))


def test_welch_peak_at_sine_frequency():
    for freq in (10.0, 22.0, 40.0):
        pxx = welch_psd(sine_window(freq))
        assert CFG.freqs[np.argmax(pxx)] == freq


def test_welch_zero_signal_is_zero():
    assert np.allclose(welch_psd(np.zeros(CFG.n_window)), 0.0)


def test_welch_white_noise_is_flat():
    rng = np.random.default_rng(5)
    pxx = welch_psd(rng.standard_normal((1000, CFG.n_window))).mean(axis=0)
    assert np.all(np.abs(pxx / pxx.mean() - 1.0) < 0.1)


def test_welch_rejects_wrong_window_length():
    with pytest.raises(ValueError):
        welch_psd(np.zeros(500))


def test_sliding_windows_hop():
    data = np.arange(16 * (512 + 3 * 32), dtype=float).reshape(16, -1)
    wins = sliding_windows(data)
    assert wins.shape == (4, 16, 512)
    assert np.array_equal(wins[0], data[:, :512])
    assert np.array_equal(wins[1], data[:, 32:544])
    assert sliding_windows(np.zeros((16, 100))).shape == (0, 16, 512)


# -- feature ranking and classifier ------------------------------------------

def test_fisher_identical_classes_scores_zero():
    x = np.tile(np.arange(5.0), (8, 1))
    y = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    assert np.array_equal(fisher_scores(x, y), np.zeros(5))


def test_fisher_ranks_planted_feature_first():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((200, 20))
    y = np.repeat([0, 1], 100)
    x[y == 1, 7] += 3.0
    scores = fisher_scores(x, y)
    assert np.argmax(scores) == 7


def test_fisher_scale_invariant():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((60, 10))
    y = rng.integers(0, 2, 60)
    y[:2], y[-2:] = 0, 1  # both classes present
    assert np.allclose(fisher_scores(x, y), fisher_scores(4.2 * x, y))


def test_select_top_k_deterministic_ties():
    assert list(select_top_k(np.array([1.0, 3.0, 3.0, 0.0]), 2)) == [1, 2]
    with pytest.raises(ValueError):
        select_top_k(np.array([1.0]), 2)


def test_classifier_symmetric_midpoint():
    model = GaussianModel(means=[[-1.0, -1.0], [1.0, 1.0]],
                          variances=[[1.0, 1.0], [1.0, 1.0]],
                          priors=[0.5, 0.5])
    assert np.allclose(classify(model, np.zeros(2)), [0.5, 0.5])


def test_classifier_confidence_grows_with_separation():
    last = 0.5
    for sep in (1.0, 2.0, 4.0):
        model = GaussianModel(means=[[-sep], [sep]], variances=[[1.0], [1.0]],
                              priors=[0.5, 0.5])
        p = classify(model, np.array([-sep]))
        assert p[0] > last
        assert np.isclose(p.sum(), 1.0)
        last = p[0]
    assert last > 0.99


def test_train_gaussian_floors_variance():
    x = np.column_stack([np.ones(10), np.arange(10.0)])
    y = np.repeat([0, 1], 5)
    model = train_gaussian(x, y)
    assert np.all(model.variances > 0)
    p = classify(model, x[0])
    assert np.all(np.isfinite(p))


def test_train_gaussian_recovers_moments():
    rng = np.random.default_rng(8)
    x0 = rng.normal(loc=2.0, scale=1.5, size=(4000, 1))
    x1 = rng.normal(loc=-1.0, scale=0.5, size=(4000, 1))
    x = np.vstack([x0, x1])
    y = np.repeat([0, 1], 4000)
    model = train_gaussian(x, y)
    assert model.means[0, 0] == pytest.approx(2.0, abs=0.1)
    assert model.means[1, 0] == pytest.approx(-1.0, abs=0.05)
    assert model.variances[0, 0] == pytest.approx(2.25, rel=0.1)
    assert np.allclose(model.priors, [0.5, 0.5])


# -- evidence integration ------------------------------------------------------

def test_integrate_golden_value():
    state = PosteriorState(alpha=0.9)
    state = integrate(state, np.array([0.8, 0.2]))
    assert np.allclose(state.p, [0.53, 0.47], atol=1e-12)


def test_integrate_alpha_endpoints():
    q = np.array([0.7, 0.3])
    frozen = integrate(PosteriorState(alpha=1.0), q)
    assert np.allclose(frozen.p, [0.5, 0.5], atol=1e-15)
    passthrough = integrate(PosteriorState(alpha=0.0), q)
    assert np.allclose(passthrough.p, q, atol=1e-15)


def test_integrate_contracts_geometrically():
    q = np.array([0.8, 0.2])
    state = PosteriorState(alpha=0.97)
    gap0 = state.p - q
    for n in range(1, 200):
        state = integrate(state, q)
        assert np.allclose(state.p - q, 0.97 ** n * gap0, rtol=1e-9, atol=1e-15)
        assert state.p.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(state.p >= 0)


def test_integrate_rejects_non_distribution():
    with pytest.raises(ValueError):
        integrate(PosteriorState(), np.array([0.8, 0.1]))


def test_emit_threshold_and_reset():
    state = PosteriorState(p=np.array([0.95, 0.05]), threshold=0.9)
    state, cmd = maybe_emit(state, now=0.0)
    assert cmd == "left"
    assert np.allclose(state.p, [0.5, 0.5])
    state2 = PosteriorState(p=np.array([0.05, 0.95]), threshold=0.9)
    _, cmd2 = maybe_emit(state2, now=0.0)
    assert cmd2 == "right"
    state3 = PosteriorState(p=np.array([0.6, 0.4]), threshold=0.9)
    same, cmd3 = maybe_emit(state3, now=0.0)
    assert cmd3 is None and same is state3


def test_first_emission_hop_count():
    # p_n[0] = 0.8 - 0.3 * alpha^n; first n with p_n >= threshold
    alpha, threshold = 0.97, 0.75
    want = math.ceil(math.log((0.8 - threshold) / 0.3) / math.log(alpha))
    assert want == 59  # frozen
    state = PosteriorState(alpha=alpha, threshold=threshold)
    q = np.array([0.8, 0.2])
    for n in range(1, 200):
        state = integrate(state, q)
        state, cmd = maybe_emit(state, now=n * CFG.shift_s)
        if cmd is not None:
            assert cmd == "left"
            assert n == want
            break
    else:
        pytest.fail("no emission")


def test_no_emission_when_evidence_saturates_below_threshold():
    state = PosteriorState(alpha=0.97, threshold=0.9)
    q = np.array([0.8, 0.2])
    for n in range(5000):
        state = integrate(state, q)
        state, cmd = maybe_emit(state, now=n * CFG.shift_s)
        assert cmd is None
    assert state.p[0] == pytest.approx(0.8, abs=1e-9)


def test_refractory_spaces_emissions():
    state = PosteriorState(alpha=0.97, threshold=0.6)
    q = np.array([1.0, 0.0])
    stamps = []
    for n in range(1, 161):  # 10 s of hops
        now = n * CFG.shift_s
        state = integrate(state, q)
        state, cmd = maybe_emit(state, now=now, refractory=1.0)
        if cmd is not None:
            stamps.append(now)
    assert len(stamps) >= 8
    assert np.all(np.diff(stamps) >= 1.0 - 1e-9)


def test_posterior_stream_bias_and_symmetry():
    rng = np.random.default_rng(9)
    stream = PosteriorStream(rng)
    left = np.array([stream.sample("left") for _ in range(1000)])
    right = np.array([stream.sample("right") for _ in range(1000)])
    assert np.allclose(left.sum(axis=1), 1.0)
    assert left[:, 0].mean() == pytest.approx(14.0 / 15.0, abs=0.02)
    assert right[:, 1].mean() == pytest.approx(14.0 / 15.0, abs=0.02)
    with pytest.raises(ValueError):
        stream.sample("up")


# -- synthetic generator --------------------------------------------------------

GEN = SyntheticEegConfig(trial_s=4.0)


def band_power(frame, channel, bins):
    ch = CHANNELS.index(channel)
    wins = sliding_windows(frame.data[ch:ch + 1])[:, 0, :]
    return welch_psd(wins).mean(axis=0)[bins].sum()


def test_trial_shape_and_determinism():
    a = generate_trial(GEN, "hands", np.random.default_rng(11))
    b = generate_trial(GEN, "hands", np.random.default_rng(11))
    c = generate_trial(GEN, "feet", np.random.default_rng(11))
    assert a.data.shape == (16, 4 * SAMPLE_RATE)
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)


def test_hands_trials_suppress_mu_at_c3():
    rng = np.random.default_rng(12)
    mu_bins = [3, 4]  # 10 and 12 Hz
    hands = np.mean([band_power(generate_trial(GEN, "hands", rng), "C3", mu_bins)
                     for _ in range(50)])
    rest = np.mean([band_power(generate_trial(GEN, "feet", rng), "C3", mu_bins)
                    for _ in range(50)])
    assert hands / rest == pytest.approx(0.3, rel=0.15)


def test_feet_trials_modulate_beta_at_cz():
    rng = np.random.default_rng(13)
    beta_bins = [9, 10, 11]  # 22, 24, 26 Hz
    feet = np.mean([band_power(generate_trial(GEN, "feet", rng), "Cz", beta_bins)
                    for _ in range(50)])
    rest = np.mean([band_power(generate_trial(GEN, "hands", rng), "Cz", beta_bins)
                    for _ in range(50)])
    assert feet / rest == pytest.approx(0.3, rel=0.15)


def test_null_factors_make_classes_indistinguishable():
    null = SyntheticEegConfig(
        trial_s=4.0,
        hands_mod=(("C3", (10.0, 12.0), 1.0), ("C4", (10.0, 12.0), 1.0)),
        feet_mod=(("Cz", (22.0, 26.0), 1.0),))
    rng = np.random.default_rng(14)
    mu_bins = [3, 4]
    hands = [band_power(generate_trial(null, "hands", rng), "C3", mu_bins)
             for _ in range(30)]
    feet = [band_power(generate_trial(null, "feet", rng), "C3", mu_bins)
            for _ in range(30)]
    assert stats.ttest_ind(hands, feet).pvalue > 0.01


def test_generator_validates_config():
    with pytest.raises(ValueError):
        SyntheticEegConfig(hands_mod=(("C3", (10.0, 12.0), 0.0),))
    with pytest.raises(ValueError):
        generate_trial(GEN, "tongue", np.random.default_rng(0))


# -- calibration and the online loop --------------------------------------------

@pytest.fixture(scope="module")
def calibrated():
    return calibrate(SyntheticEegConfig(), np.random.default_rng(42))


def test_calibration_selects_planted_neighborhoods(calibrated):
    # the spatial filter spreads each planted rhythm onto its grid
    # neighbors, so those channels count as the planted neighborhood too
    nmap = neighbor_map()
    allowed = set()
    for ch, freqs in (("C3", (8.0, 10.0, 12.0, 14.0)),
                      ("C4", (8.0, 10.0, 12.0, 14.0)),
                      ("Cz", (20.0, 22.0, 24.0, 26.0, 28.0))):
        for spot in (ch,) + nmap[ch]:
            allowed |= {(spot, f) for f in freqs}
    assert len(calibrated.layout) == 6
    assert set(calibrated.layout) <= allowed
    assert calibrated.holdout_accuracy >= 0.8


def test_calibration_is_deterministic():
    small = SyntheticEegConfig(trial_s=4.0)
    a = calibrate(small, np.random.default_rng(1), runs=1, trials_per_run=10)
    b = calibrate(small, np.random.default_rng(1), runs=1, trials_per_run=10)
    assert a.layout == b.layout
    assert np.array_equal(a.model.means, b.model.means)
    assert a.holdout_accuracy == b.holdout_accuracy


def test_calibration_k1_selects_the_single_planted_pair():
    # a single tone centered on the 10 Hz bin keeps the planted pair exact
    cfg = SyntheticEegConfig(
        trial_s=4.0,
        rhythms=(("C3", (10.0, 10.4)),),
        hands_mod=(("C3", (10.0, 10.4), 0.2),),
        feet_mod=())
    out = calibrate(cfg, np.random.default_rng(2), k=1)
    assert out.layout == (("C3", 10.0),)


def test_calibration_fails_without_discriminant():
    null = SyntheticEegConfig(
        trial_s=4.0,
        hands_mod=(("C3", (10.0, 12.0), 1.0), ("C4", (10.0, 12.0), 1.0)),
        feet_mod=(("Cz", (22.0, 26.0), 1.0),))
    with pytest.raises(CalibrationError):
        calibrate(null, np.random.default_rng(3), runs=2, trials_per_run=20)


def test_model_file_roundtrip(tmp_path, calibrated):
    path = tmp_path / "model.json"
    save_model(path, calibrated)
    doc = json.loads(path.read_text())
    assert doc["format"] == "bcimodel/1"
    loaded = load_model(path)
    assert loaded.layout == calibrated.layout
    assert np.allclose(loaded.model.means, calibrated.model.means)
    assert np.allclose(loaded.model.variances, calibrated.model.variances)
    assert loaded.alpha == calibrated.alpha
    assert loaded.threshold == calibrated.threshold
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"format": "other/1"}))
    with pytest.raises(ValueError):
        load_model(bad)


def test_online_decoder_emits_intended_commands(calibrated):
    rng = np.random.default_rng(21)
    correct = 0
    trials = [("hands", "left")] * 10 + [("feet", "right")] * 10
    for label, want in trials:
        frame = generate_trial(SyntheticEegConfig(), label, rng)
        dec = OnlineDecoder(calibrated)
        emitted = dec.process(frame.data)
        if emitted and emitted[0][1] == want:
            correct += 1
    assert correct >= 16  # 80% of 20


def test_online_decoder_stream_invariance(calibrated):
    frame = generate_trial(SyntheticEegConfig(), "hands", np.random.default_rng(22))
    whole = OnlineDecoder(calibrated).process(frame.data)
    chunked_dec = OnlineDecoder(calibrated)
    chunked = []
    for start in range(0, frame.data.shape[1], 7):
        chunked += chunked_dec.process(frame.data[:, start:start + 7])
    assert whole == chunked
    again = OnlineDecoder(calibrated).process(frame.data)
    assert whole == again
    assert whole  # this trial does emit
