import numpy as np
import pytest

from qdfusion.cascade import (
    EmitterParams,
    TimeGrid,
    discretize,
    from_lifetimes,
    pair_state,
    reduced_density,
    purity,
    PairState,
)
from qdfusion.fusion import (
    SCHEMES,
    FusionConfig,
    Wandering,
    detuning_samples,
    fuse,
    fuse_analytic,
    hom_pbs,
    pbs_mode_matrix,
    pbs_mode_transform,
)
from qdfusion.cascade import HBAR_UEV_PS, TemporalDensity


def brute_force_fuse(pair_a, pair_b, scheme):
    """Explicit time-bin routing oracle.

    Builds the full four-photon polarization x time amplitude, routes every
    photon through its PBS by polarization (H transmits, V reflects), keeps
    only events with exactly one photon per detector, and traces the time
    bins.  Independent of the Schmidt engine's contraction bookkeeping.
    """
    grid = pair_a.grid
    n, dt = grid.n_bins, grid.dt
    interfere_xx = scheme in ("double_pbs", "single_pbs_xx")
    interfere_x = scheme in ("double_pbs", "single_pbs_x")
    out = np.zeros((16, n, n, n, n), dtype=complex)
    for pa_xx in (0, 1):
        for pa_x in (0, 1):
            for pb_xx in (0, 1):
                for pb_x in (0, 1):
                    block_a = pair_a.psi[pa_xx, pa_x]
                    block_b = pair_b.psi[pb_xx, pb_x]
                    if not block_a.any() or not block_b.any():
                        continue
                    if interfere_xx:
                        det_a_xx = 0 if pa_xx == 0 else 1
                        det_b_xx = 1 if pb_xx == 0 else 0
                        if det_a_xx == det_b_xx:
                            continue  # both XX photons exit one arm
                    else:
                        det_a_xx, det_b_xx = 0, 1
                    if interfere_x:
                        det_a_x = 0 if pa_x == 0 else 1
                        det_b_x = 1 if pb_x == 0 else 0
                        if det_a_x == det_b_x:
                            continue
                    else:
                        det_a_x, det_b_x = 0, 1
                    pol = [0] * 4
                    pol[det_a_xx] = pa_xx
                    pol[det_b_xx] = pb_xx
                    pol[2 + det_a_x] = pa_x
                    pol[2 + det_b_x] = pb_x
                    term = np.einsum("ab,cd->abcd", block_a, block_b)
                    src = [0] * 4  # term axis holding each detector's time
                    src[det_a_xx] = 0
                    src[2 + det_a_x] = 1
                    src[det_b_xx] = 2
                    src[2 + det_b_x] = 3
                    idx = pol[0] * 8 + pol[1] * 4 + pol[2] * 2 + pol[3]
                    out[idx] += np.transpose(term, axes=src)
    flat = out.reshape(16, -1)
    rho_raw = flat @ flat.conj().T * dt ** 4
    return rho_raw


class TestPbsPrimitive:
    def test_matrix_is_permutation_and_unitary(self):
        m = pbs_mode_matrix()
        assert np.allclose(m @ m.T, np.eye(4))
        assert np.all(np.sort(m.sum(axis=0)) == 1.0)

    def test_transform_examples(self):
        amp = np.zeros((2, 2), dtype=complex)
        amp[0, 0] = 1.0  # H in input a
        out = pbs_mode_transform(amp)
        assert out[0, 0] == 1.0  # transmitted to c
        amp = np.zeros((2, 2), dtype=complex)
        amp[0, 1] = 1.0  # V in input a
        out = pbs_mode_transform(amp)
        assert out[1, 1] == 1.0  # reflected to d

    def test_transform_preserves_norm(self, rng):
        amp = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        out = pbs_mode_transform(amp)
        assert np.sum(np.abs(out) ** 2) == pytest.approx(np.sum(np.abs(amp) ** 2))


class TestHomPbs:
    def test_identical_pure_modes(self, emitter, grid256):
        t = grid256.centers()
        mode = np.exp(-t / 200.0).astype(complex)
        mode /= np.sqrt(np.sum(np.abs(mode) ** 2) * grid256.dt)
        rho = TemporalDensity(grid=grid256, matrix=np.outer(mode, mode.conj()))
        res = hom_pbs(rho, rho)
        assert res.visibility == pytest.approx(1.0, abs=1e-9)
        assert res.prob_cross == pytest.approx(0.0, abs=1e-9)
        assert res.prob_parallel == pytest.approx(0.25, abs=1e-9)

    def test_orthogonal_modes(self, grid256):
        n = grid256.n_bins
        m1 = np.zeros(n, dtype=complex)
        m2 = np.zeros(n, dtype=complex)
        m1[: n // 2] = 1.0
        m2[n // 2:] = 1.0
        for m in (m1, m2):
            m /= np.sqrt(np.sum(np.abs(m) ** 2) * grid256.dt)
        r1 = TemporalDensity(grid=grid256, matrix=np.outer(m1, m1.conj()))
        r2 = TemporalDensity(grid=grid256, matrix=np.outer(m2, m2.conj()))
        res = hom_pbs(r1, r2)
        assert res.visibility == pytest.approx(0.0, abs=1e-12)

    def test_cascade_photons_reach_purity(self, emitter, grid256):
        rho = reduced_density(discretize(emitter, grid256), "x")
        res = hom_pbs(rho, rho)
        assert res.visibility == pytest.approx(purity(rho), abs=1e-10)
        # grid purity sits a little above the continuum bound (lattice bias)
        assert res.visibility == pytest.approx(0.7630, abs=5e-3)

    def test_unnormalized_rejected(self, emitter, grid256):
        rho = reduced_density(discretize(emitter, grid256), "x")
        bad = TemporalDensity(grid=grid256, matrix=2.0 * rho.matrix)
        with pytest.raises(ValueError):
            hom_pbs(rho, bad)


class TestFuseIdeal:
    def test_double_pbs(self, pair512):
        out = fuse(pair512, pair512, FusionConfig(scheme="double_pbs"))
        assert out.coherence == pytest.approx(1.0, abs=1e-3)
        assert out.population == pytest.approx(1.0, abs=1e-9)
        assert out.success_probability == pytest.approx(0.5, abs=1e-9)

    @pytest.mark.parametrize("scheme", ["single_pbs_x", "single_pbs_xx"])
    def test_single_pbs_equals_purity_bound(self, scheme):
        p = EmitterParams(gamma_xx=3.22 * 0.004, gamma_x=0.004)
        grid = TimeGrid.default(p, n_bins=1024)
        pair = pair_state(p, grid)
        lam = np.linalg.svd(discretize(p, grid).values, compute_uv=False) * grid.dt
        k = int(np.searchsorted(np.cumsum(lam ** 2), 1.0 - 2e-4)) + 1
        cfg = FusionConfig(scheme=scheme, schmidt_modes=k, max_residual=1.0)
        out = fuse(pair, pair, cfg)
        assert out.coherence == pytest.approx(0.7630, abs=1e-3)

    def test_double_insensitive_to_truncation(self, pair512):
        c8 = fuse(pair512, pair512,
                  FusionConfig(scheme="double_pbs", schmidt_modes=8)).coherence
        c16 = fuse(pair512, pair512,
                   FusionConfig(scheme="double_pbs", schmidt_modes=16)).coherence
        assert abs(c8 - c16) < 1e-4

    def test_residual_gate_raises_with_value(self):
        p = EmitterParams(gamma_xx=0.004, gamma_x=0.004)  # ratio 1: heavy tail
        pair = pair_state(p, TimeGrid.default(p, n_bins=256))
        with pytest.raises(ValueError, match="residual"):
            fuse(pair, pair, FusionConfig(scheme="double_pbs", schmidt_modes=8,
                                          max_residual=1e-3))


class TestBruteForceOracle:
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_engine_matches_routing_oracle(self, emitter, scheme):
        grid = TimeGrid.default(emitter, n_bins=16)
        pair = pair_state(emitter, grid)
        cfg = FusionConfig(scheme=scheme, schmidt_modes=16, max_residual=1.0)
        out = fuse(pair, pair, cfg)
        rho_raw = brute_force_fuse(pair, pair, scheme)
        success = float(np.real(np.trace(rho_raw)))
        rho = rho_raw / success
        assert success == pytest.approx(out.success_probability, abs=1e-12)
        assert np.max(np.abs(rho - out.state.matrix)) < 1e-10

    def test_oracle_with_fss(self, scheme="double_pbs"):
        p = from_lifetimes(125.5, 38.8, fss=4.0)
        grid = TimeGrid.default(p, n_bins=16)
        pair = pair_state(p, grid)
        cfg = FusionConfig(scheme=scheme, schmidt_modes=16, max_residual=1.0)
        out = fuse(pair, pair, cfg)
        rho_raw = brute_force_fuse(pair, pair, scheme)
        rho = rho_raw / np.real(np.trace(rho_raw))
        assert np.max(np.abs(rho - out.state.matrix)) < 1e-10

    def test_oracle_with_admixture(self):
        emitter = from_lifetimes(125.5, 38.8)
        grid = TimeGrid.default(emitter, n_bins=16)
        pair = pair_state(emitter, grid)
        env = discretize(emitter, grid).values
        psi_hv = np.zeros((2, 2, 16, 16), dtype=complex)
        psi_hv[0, 1] = env
        hv = PairState(grid=grid, psi=psi_hv)
        ens = [(0.95, pair), (0.05, hv)]
        cfg = FusionConfig(scheme="double_pbs", schmidt_modes=16, max_residual=1.0)
        out = fuse(ens, ens, cfg)
        raw = (0.95 ** 2 * brute_force_fuse(pair, pair, "double_pbs")
               + 0.95 * 0.05 * brute_force_fuse(pair, hv, "double_pbs")
               + 0.05 * 0.95 * brute_force_fuse(hv, pair, "double_pbs")
               + 0.05 ** 2 * brute_force_fuse(hv, hv, "double_pbs"))
        rho = raw / np.real(np.trace(raw))
        assert np.max(np.abs(rho - out.state.matrix)) < 1e-10


class TestParameterSweeps:
    @pytest.mark.parametrize("ratio", [1.0, 2.0, 3.22, 10.0])
    @pytest.mark.parametrize("sigma", [0.0, 0.5, 2.0])
    def test_valid_states_across_sweep(self, ratio, sigma):
        p = EmitterParams(gamma_xx=ratio * 0.004, gamma_x=0.004,
                          sigma_x=sigma, sigma_xx=sigma)
        grid = TimeGrid.default(p, n_bins=128)
        pair = pair_state(p, grid)
        wander = (Wandering.independent(sigma, sigma) if sigma else Wandering.off())
        cfg = FusionConfig(scheme="double_pbs", schmidt_modes=24,
                           wandering=wander, detuning_samples=32, max_residual=1.0)
        out = fuse(pair, pair, cfg)  # PolarizationState validates on build
        assert 0.0 <= out.success_probability <= 1.0
        assert 0.0 <= out.population <= 1.0 + 1e-9
        assert 0.0 <= out.coherence <= 1.0 + 1e-9

    @pytest.mark.parametrize("ratio", [1.0, 2.0, 3.22, 10.0])
    def test_double_coherence_ratio_independent(self, ratio):
        p = EmitterParams(gamma_xx=ratio * 0.004, gamma_x=0.004)
        pair = pair_state(p, TimeGrid.default(p, n_bins=256))
        cfg = FusionConfig(scheme="double_pbs", schmidt_modes=16, max_residual=1.0)
        assert fuse(pair, pair, cfg).coherence == pytest.approx(1.0, abs=1e-3)


class TestAnalyticAgreement:
    @pytest.mark.parametrize("scheme", SCHEMES)
    @pytest.mark.parametrize("wandering", [
        Wandering.off(),
        Wandering.independent(2.0, 1.0),
        Wandering.correlated(1.5),
    ], ids=["off", "independent", "correlated"])
    def test_fuse_vs_analytic(self, emitter, grid512, pair512, scheme, wandering):
        cfg = FusionConfig(scheme=scheme, schmidt_modes=48, wandering=wandering,
                           detuning_samples=64, max_residual=1.0)
        engine = fuse(pair512, pair512, cfg)
        analytic = fuse_analytic(emitter, cfg)
        assert engine.coherence == pytest.approx(analytic.coherence, abs=1e-3)

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_fuse_vs_analytic_with_fss(self, grid512, scheme):
        p = from_lifetimes(125.5, 38.8, fss=4.0)
        pair = pair_state(p, grid512)
        cfg = FusionConfig(scheme=scheme, schmidt_modes=48, max_residual=1.0)
        engine = fuse(pair, pair, cfg)
        analytic = fuse_analytic(p, cfg)
        assert engine.coherence == pytest.approx(analytic.coherence, abs=1e-3)

    def test_analytic_ideal_values(self, emitter):
        bound = emitter.gamma_xx / (emitter.gamma_xx + emitter.gamma_x)
        for scheme, expect in (("double_pbs", 1.0),
                               ("single_pbs_x", bound),
                               ("single_pbs_xx", bound)):
            out = fuse_analytic(emitter, FusionConfig(scheme=scheme))
            assert out.coherence == pytest.approx(expect, abs=1e-9)

    def test_analytic_dephased_limit(self, emitter):
        cfg = FusionConfig(scheme="double_pbs",
                           wandering=Wandering.independent(2000.0, 2000.0),
                           detuning_samples=256)
        assert fuse_analytic(emitter, cfg).coherence < 0.01
        cfg = FusionConfig(scheme="single_pbs_x",
                           wandering=Wandering.independent(2000.0, 2000.0),
                           detuning_samples=256)
        assert fuse_analytic(emitter, cfg).coherence < 0.01


class TestAdmixtureFiltering:
    def test_double_pbs_population_beats_single(self, emitter, grid256):
        pair = pair_state(emitter, grid256)
        env = discretize(emitter, grid256).values
        n = grid256.n_bins
        psi_hv = np.zeros((2, 2, n, n), dtype=complex)
        psi_hv[0, 1] = env
        ens = [(0.95, pair), (0.05, PairState(grid=grid256, psi=psi_hv))]
        pops = {}
        for scheme in ("double_pbs", "single_pbs_x", "single_pbs_xx"):
            cfg = FusionConfig(scheme=scheme, schmidt_modes=8)
            pops[scheme] = fuse(ens, ens, cfg).population
        assert pops["double_pbs"] > pops["single_pbs_x"]
        assert pops["double_pbs"] > pops["single_pbs_xx"]


class TestWanderingSampling:
    def test_deterministic(self):
        w = Wandering.independent(2.0, 1.0)
        a = detuning_samples(w, 64, seed=3, hbar=HBAR_UEV_PS)
        b = detuning_samples(w, 64, seed=3, hbar=HBAR_UEV_PS)
        assert np.array_equal(a, b)
        c = detuning_samples(w, 64, seed=4, hbar=HBAR_UEV_PS)
        assert not np.array_equal(a, c)

    def test_off_gives_single_zero_sample(self):
        d = detuning_samples(Wandering.off(), 100, seed=1, hbar=HBAR_UEV_PS)
        assert d.shape == (1, 4)
        assert np.all(d == 0.0)

    def test_correlated_columns(self):
        d = detuning_samples(Wandering.correlated(2.0), 32, seed=5, hbar=HBAR_UEV_PS)
        assert np.array_equal(d[:, 0], d[:, 1])
        assert np.array_equal(d[:, 2], d[:, 3])

    def test_scales(self):
        d = detuning_samples(Wandering.independent(2.0, 1.0), 512, seed=6,
                             hbar=HBAR_UEV_PS)
        # columns: (a_xx, a_x, b_xx, b_x); sigma_xx applies to xx columns
        assert d[:, 0].std() == pytest.approx(1.0 / HBAR_UEV_PS, rel=0.15)
        assert d[:, 1].std() == pytest.approx(2.0 / HBAR_UEV_PS, rel=0.15)

    def test_fuse_determinism(self, pair512):
        cfg = FusionConfig(scheme="double_pbs", schmidt_modes=12,
                           wandering=Wandering.independent(1.0, 1.0),
                           detuning_samples=32, seed=11)
        a = fuse(pair512, pair512, cfg)
        b = fuse(pair512, pair512, cfg)
        assert np.array_equal(a.state.matrix, b.state.matrix)


class TestPhaseOffset:
    def test_birefringence_phase_reported(self, pair512):
        cfg = FusionConfig(scheme="double_pbs", phi_offset=0.4)
        out = fuse(pair512, pair512, cfg)
        assert out.phase == pytest.approx(0.4, abs=1e-9)
        assert out.coherence == pytest.approx(1.0, abs=1e-3)


class TestConfigValidation:
    def test_bad_scheme(self):
        with pytest.raises(ValueError):
            FusionConfig(scheme="triple_pbs")

    def test_bad_counts(self):
        with pytest.raises(ValueError):
            FusionConfig(schmidt_modes=0)
        with pytest.raises(ValueError):
            FusionConfig(detuning_samples=0)

    def test_bad_wandering(self):
        with pytest.raises(ValueError):
            Wandering(mode="sometimes")
        with pytest.raises(ValueError):
            Wandering.independent(-1.0, 0.0)

    def test_mismatched_grids_rejected(self, emitter):
        p1 = pair_state(emitter, TimeGrid.default(emitter, n_bins=64))
        p2 = pair_state(emitter, TimeGrid.default(emitter, n_bins=128))
        with pytest.raises(ValueError):
            fuse(p1, p2, FusionConfig(scheme="double_pbs", max_residual=1.0))
