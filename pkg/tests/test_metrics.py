import numpy as np
import pytest
from scipy.optimize import minimize

from qdfusion.metrics import (
    TOMO_SETTINGS_16,
    TOMO_SETTINGS_36,
    CoherenceScan,
    TomographyRecord,
    coherence_eq3,
    coherence_fit,
    coherence_scan,
    default_thetas,
    ghz_fidelity,
    max_entangled_fidelity,
    population,
    synthetic_record,
    tomography_reconstruct,
)
from qdfusion.polarization import (
    PolarizationState,
    fidelity,
    ghz_pure,
    maximally_mixed,
)


def fef_bruteforce(state, restarts=40, seed=0):
    """Independent oracle: maximize <Phi|(U x V) rho (U x V)^+|Phi> directly."""
    bell = np.zeros(4, dtype=complex)
    bell[0] = bell[3] = 1.0 / np.sqrt(2.0)

    def su2(a, b, c):
        return np.array([
            [np.cos(a) * np.exp(1j * b), np.sin(a) * np.exp(1j * c)],
            [-np.sin(a) * np.exp(-1j * c), np.cos(a) * np.exp(-1j * b)],
        ])

    rho = state.matrix

    def neg(x):
        vec = np.kron(su2(*x[:3]), su2(*x[3:])).conj().T @ bell
        return -float(np.real(vec.conj() @ rho @ vec))

    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(restarts):
        res = minimize(neg, rng.uniform(0, np.pi, 6), method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 5000})
        best = max(best, -res.fun)
    return best


def random_state(rng, n=2):
    dim = 2 ** n
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return PolarizationState(n, rho / np.trace(rho).real)


def sector_state(rng, n=4):
    """Random state supported on the GHZ population+coherence sector."""
    p_h = rng.uniform(0.2, 0.8)
    p_v = 1.0 - p_h
    c = rng.uniform(0.0, np.sqrt(p_h * p_v))
    phi = rng.uniform(0.0, 2 * np.pi)
    dim = 2 ** n
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0], rho[-1, -1] = p_h, p_v
    rho[0, -1] = c * np.exp(-1j * phi)
    rho[-1, 0] = c * np.exp(1j * phi)
    return PolarizationState(n, rho), 2 * c, phi


class TestPopulation:
    def test_ideal_ghz(self):
        assert population(ghz_pure(4, 0.7), 4) == pytest.approx(1.0)

    def test_maximally_mixed(self):
        assert population(maximally_mixed(4), 4) == pytest.approx(2.0 / 16.0)

    def test_histogram_input(self):
        counts = {"HHHH": 450, "VVVV": 460, "HHVV": 90}
        assert population(counts, 4) == pytest.approx(910 / 1000)
        counts01 = {"0000": 450, "1111": 460, "0011": 90}
        assert population(counts01, 4) == pytest.approx(910 / 1000)

    def test_empty_counts(self):
        with pytest.raises(ValueError):
            population({}, 4)

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            population(ghz_pure(4, 0.0), 3)


class TestCoherenceScan:
    def test_values_at_reference_angles(self):
        scan = coherence_scan(ghz_pure(4, 0.0))
        assert scan.values[0] == pytest.approx(1.0)
        idx = np.argmin(np.abs(scan.thetas - np.pi / 4))
        # default grid has no point exactly at pi/4; check cos(4 theta) there
        assert np.allclose(scan.values, np.cos(4 * scan.thetas), atol=1e-10)
        direct = coherence_scan(ghz_pure(4, 0.0), thetas=[np.pi / 4])
        assert direct.values[0] == pytest.approx(-1.0)

    @pytest.mark.parametrize("phi", [0.0, 0.9, np.pi])
    def test_full_scan_matches_cosine(self, phi):
        scan = coherence_scan(ghz_pure(4, phi), thetas=np.linspace(0, np.pi, 17))
        assert np.allclose(scan.values, np.cos(4 * scan.thetas - phi), atol=1e-10)

    def test_default_grid_is_pi_ninths(self):
        th = default_thetas()
        assert np.allclose(th, np.arange(10) * np.pi / 9)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            CoherenceScan(thetas=np.array([0.0, 1.0]), values=np.array([1.5, 0.0]))


class TestCoherenceFit:
    def test_exact_recovery(self):
        scan = coherence_scan(ghz_pure(4, 0.3))
        fit = coherence_fit(scan, 4)
        assert fit.coherence == pytest.approx(1.0, abs=1e-6)
        assert fit.phase == pytest.approx(0.3, abs=1e-6)
        assert not fit.degenerate

    def test_partial_amplitude(self, rng):
        state, c_true, phi_true = sector_state(rng)
        fit = coherence_fit(coherence_scan(state), 4)
        assert fit.coherence == pytest.approx(c_true, abs=1e-9)
        assert fit.phase == pytest.approx(phi_true, abs=1e-6)

    def test_zero_scan_degenerate(self):
        scan = CoherenceScan(thetas=default_thetas(), values=np.zeros(10))
        fit = coherence_fit(scan, 4)
        assert fit.coherence == 0.0
        assert fit.degenerate

    def test_too_few_points(self):
        scan = CoherenceScan(thetas=np.array([0.0, 0.5, 1.0]), values=np.zeros(3))
        with pytest.raises(ValueError):
            coherence_fit(scan, 4)

    def test_errors_propagate(self):
        scan = CoherenceScan(thetas=default_thetas(),
                             values=np.cos(4 * default_thetas()),
                             errors=np.full(10, 1e-3))
        fit = coherence_fit(scan, 4)
        assert fit.coherence_err is not None
        assert 0.0 < fit.coherence_err < 2e-3


class TestCoherenceEq3:
    def test_matching_phase(self):
        for phi in (0.0, 0.8, np.pi / 2):
            assert coherence_eq3(ghz_pure(4, phi), 4, phi) == pytest.approx(1.0, abs=1e-10)

    def test_maximally_mixed(self):
        assert coherence_eq3(maximally_mixed(4), 4, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_sign_flip_at_pi(self):
        assert coherence_eq3(ghz_pure(4, 0.0), 4, np.pi) == pytest.approx(-1.0, abs=1e-10)

    def test_consistency_with_fit(self, rng):
        for _ in range(5):
            state, _, _ = sector_state(rng)
            fit = coherence_fit(coherence_scan(state), 4)
            eq3 = coherence_eq3(state, 4, fit.phase)
            assert eq3 == pytest.approx(fit.coherence, abs=1e-6)


class TestGhzFidelity:
    def test_values(self):
        assert ghz_fidelity(1.0, 1.0) == 1.0
        assert ghz_fidelity(0.956, 0.552) == pytest.approx(0.754)
        assert ghz_fidelity(0.5, 0.0) == pytest.approx(0.25)

    def test_range_validation(self):
        with pytest.raises(ValueError):
            ghz_fidelity(1.2, 0.5)
        with pytest.raises(ValueError):
            ghz_fidelity(0.5, -0.1)

    def test_equals_state_fidelity_on_sector(self, rng):
        for _ in range(8):
            state, _, _ = sector_state(rng)
            pop = population(state, 4)
            fit = coherence_fit(coherence_scan(state), 4)
            direct = fidelity(state, ghz_pure(4, fit.phase))
            assert ghz_fidelity(pop, fit.coherence) == pytest.approx(direct, abs=1e-10)


class TestTomography:
    def test_noiseless_roundtrip_exact(self):
        bell = ghz_pure(2, 0.0)
        rec = synthetic_record(bell, shots=10 ** 6, seed=None)
        recon = tomography_reconstruct(rec, shots=10 ** 6)
        assert fidelity(bell, recon) > 0.9999

    def test_bell_noisy_roundtrip(self):
        # at 1e6 binomial shots/setting the likelihood-refined round trip
        # recovers a pure Bell state; raw clipping sits a few 1e-3 lower
        bell = ghz_pure(2, 0.0)
        rec = synthetic_record(bell, shots=10 ** 6, seed=1)
        recon = tomography_reconstruct(rec, shots=10 ** 6, refine_iterations=400)
        assert fidelity(bell, recon) > 0.999

    def test_random_states_roundtrip(self, rng):
        for _ in range(6):
            state = random_state(rng)
            rec = synthetic_record(state, shots=10 ** 6, seed=int(rng.integers(2 ** 31)))
            recon = tomography_reconstruct(rec, shots=10 ** 6)
            assert fidelity(state, recon) > 0.999

    def test_maximally_mixed_purity(self):
        rec = synthetic_record(maximally_mixed(2), shots=10 ** 6, seed=7)
        recon = tomography_reconstruct(rec, shots=10 ** 6)
        assert recon.purity() == pytest.approx(0.25, abs=2e-3)

    def test_36_setting_roundtrip(self):
        bell = ghz_pure(2, 0.4)
        rec = synthetic_record(bell, shots=10 ** 6, settings=TOMO_SETTINGS_36, seed=2)
        recon = tomography_reconstruct(rec, shots=10 ** 6)
        assert fidelity(bell, recon) > 0.998

    def test_negative_count_rejected(self):
        counts = np.ones(16)
        counts[3] = -1.0
        with pytest.raises(ValueError, match="negative"):
            TomographyRecord(settings=TOMO_SETTINGS_16, counts=counts)

    def test_incomplete_settings_named(self):
        settings = tuple(s for s in TOMO_SETTINGS_16 if s != "RL") + ("HH",)
        rec = TomographyRecord(settings=settings, counts=np.ones(16))
        with pytest.raises(ValueError, match="RL"):
            tomography_reconstruct(rec, shots=16.0)

    def test_flux_inferred_from_hv_group(self):
        bell = ghz_pure(2, 0.0)
        rec = synthetic_record(bell, shots=10 ** 5, seed=None)
        recon = tomography_reconstruct(rec)  # no shots given
        assert fidelity(bell, recon) > 0.9999

    def test_bad_label(self):
        with pytest.raises(ValueError, match="label"):
            TomographyRecord(settings=("HH",) * 15 + ("QQ",), counts=np.ones(16))


class TestMaxEntangledFidelity:
    def test_bell(self):
        assert max_entangled_fidelity(ghz_pure(2, 0.0)) == pytest.approx(1.0, abs=1e-12)

    def test_phase_rotated_bell_still_one(self):
        assert max_entangled_fidelity(ghz_pure(2, 1.234)) == pytest.approx(1.0, abs=1e-12)

    def test_product_state(self):
        hh = PolarizationState(2, np.diag([1.0, 0, 0, 0]).astype(complex))
        assert max_entangled_fidelity(hh) == pytest.approx(0.5, abs=1e-12)

    @pytest.mark.parametrize("p", [0.0, 0.5, 1.0])
    def test_werner(self, p):
        bell = ghz_pure(2, 0.0)
        st = PolarizationState(2, p * bell.matrix + (1 - p) * np.eye(4) / 4)
        assert max_entangled_fidelity(st) == pytest.approx(p + (1 - p) / 4, abs=1e-12)

    def test_matches_bruteforce(self):
        bell = ghz_pure(2, 0.0)
        hh = PolarizationState(2, np.diag([1.0, 0, 0, 0]).astype(complex))
        werner = PolarizationState(2, 0.5 * bell.matrix + 0.5 * np.eye(4) / 4)
        for st in (bell, hh, werner):
            assert max_entangled_fidelity(st) == pytest.approx(
                fef_bruteforce(st), abs=1e-4)

    def test_matches_bruteforce_random(self, rng):
        st = random_state(rng)
        assert max_entangled_fidelity(st) == pytest.approx(
            fef_bruteforce(st, restarts=60), abs=1e-4)

    def test_local_unitary_invariance(self, rng):
        st = random_state(rng)
        base = max_entangled_fidelity(st)
        for _ in range(5):
            u = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))[0]
            v = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))[0]
            rot = np.kron(u, v)
            rotated = PolarizationState(2, rot @ st.matrix @ rot.conj().T)
            assert max_entangled_fidelity(rotated) == pytest.approx(base, abs=1e-6)

    def test_wrong_dimension(self):
        with pytest.raises(ValueError):
            max_entangled_fidelity(ghz_pure(3, 0.0))
