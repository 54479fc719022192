"""Monte Carlo measurement layer, characterization models, calibration.

Maps the deterministic fusion states onto what a counting experiment sees:
projective shot sampling with multinomial statistics, pulsed HBT for g2,
a pulse-area Rabi model, and bootstrap error bars.  ``calibrate`` fits the
free dephasing parameters (spectral-wandering sigmas, and a pair-imperfection
split between a fine-structure phase and a white polarization admixture) to
measured HOM visibilities and the two-photon entanglement fidelity, after
which ``end_to_end`` reproduces the four-photon GHZ figures for any fusion
scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import reduce

import numpy as np
from scipy.optimize import brentq

from .cascade import (
    EmitterParams,
    PairState,
    TimeGrid,
    discretize,
    indistinguishability_bound,
    nominal_emitter,
    pair_state,
    reduced_density,
)
from .fusion import FusionConfig, FusionOutcome, Wandering, detuning_samples, fuse
from .metrics import CoherenceScan, coherence_fit, default_thetas, ghz_fidelity
from .polarization import KET, PolarizationState

#: measured characterization values of the reference device
NOMINAL_TARGETS = dict(v_x=0.625, v_xx=0.694, pair_fidelity=0.908)


@dataclass(frozen=True)
class SourceModel:
    """Emitter plus measurement-chain parameters.

    ``depol`` is the white polarization admixture of each emitted pair
    (rho_pair = (1-depol) |pair><pair| + depol I/4 x temporal envelope);
    together with the emitter's fine-structure phase it carries the
    imperfect pair entanglement.  ``multiphoton_prob`` is the residual
    two-photon emission probability per pulse used by the HBT model.
    """

    emitter: EmitterParams
    pair_fidelity_target: float = 0.908
    multiphoton_prob: float = 0.0
    efficiency: float = 1.0
    window: float = 600.0
    rep_rate: float = 1.0 / 13.2
    depol: float = 0.0
    calibration: dict | None = None

    def __post_init__(self):
        for name in ("multiphoton_prob", "depol"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError(f"efficiency must lie in (0, 1], got {self.efficiency}")
        if not self.window > 0:
            raise ValueError("window must be positive")
        if not 0.0 < self.pair_fidelity_target <= 1.0:
            raise ValueError("pair_fidelity_target must lie in (0, 1]")

    def wandering(self) -> Wandering:
        e = self.emitter
        if e.sigma_x == 0.0 and e.sigma_xx == 0.0:
            return Wandering.off()
        return Wandering.independent(sigma_x=e.sigma_x, sigma_xx=e.sigma_xx)


@dataclass(frozen=True)
class CalibrationTargets:
    """Measured values the dephasing model is fitted to."""

    v_x: float = 0.625
    v_xx: float = 0.694
    pair_fidelity: float = 0.908

    def __post_init__(self):
        for name in ("v_x", "v_xx", "pair_fidelity"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")


@dataclass(frozen=True)
class MeasurementRecord:
    """Outcome histogram of repeated projective measurements."""

    setting: str
    histogram: dict
    shots: int
    seed: int | None = None

    def __post_init__(self):
        if any(v < 0 for v in self.histogram.values()):
            raise ValueError("counts must be non-negative")
        if sum(self.histogram.values()) > self.shots:
            raise ValueError("histogram total exceeds shots")


# ---------------------------------------------------------------------------
# shot sampling
# ---------------------------------------------------------------------------

def _basis_matrix(spec):
    """Rows are the measurement bras of one qubit's basis."""
    if isinstance(spec, str):
        if spec == "Z":
            kets = (KET["H"], KET["V"])
        elif spec == "X":
            kets = (KET["D"], KET["A"])
        elif spec == "Y":
            kets = (KET["R"], KET["L"])
        else:
            raise ValueError(f"unknown basis label {spec!r}")
        return np.vstack([k.conj() for k in kets])
    if isinstance(spec, tuple) and spec[0] == "M":
        theta = spec[1]
        plus = np.array([1.0, np.exp(1j * theta)]) / np.sqrt(2.0)
        minus = np.array([1.0, -np.exp(1j * theta)]) / np.sqrt(2.0)
        return np.vstack([plus.conj(), minus.conj()])
    m = np.asarray(spec, dtype=complex)
    if m.shape != (2, 2) or not np.allclose(m @ m.conj().T, np.eye(2), atol=1e-10):
        raise ValueError("basis must be a 2x2 unitary (rows = measurement bras)")
    return m


def outcome_probabilities(state: PolarizationState, bases) -> np.ndarray:
    """Probabilities of the 2^n product outcomes for per-qubit bases."""
    if len(bases) != state.n_qubits:
        raise ValueError("need one basis per qubit")
    u = reduce(np.kron, [_basis_matrix(b) for b in bases])
    probs = np.real(np.diag(u @ state.matrix @ u.conj().T))
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def sample_outcomes(state: PolarizationState, bases, shots: int, seed) -> MeasurementRecord:
    """Multinomial sampling of projective outcomes; deterministic given seed."""
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    probs = outcome_probabilities(state, bases)
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(shots, probs)
    n = state.n_qubits
    histogram = {
        format(i, f"0{n}b"): int(c) for i, c in enumerate(counts) if c > 0
    }
    label = "".join(b if isinstance(b, str) else "M" for b in bases)
    return MeasurementRecord(setting=label, histogram=histogram, shots=shots,
                             seed=seed if isinstance(seed, int) else None)


def parity_expectation(record: MeasurementRecord) -> float:
    """Mean of (-1)^(number of '1' outcomes) over the recorded shots."""
    total = 0
    for outcome, c in record.histogram.items():
        total += c * ((-1) ** outcome.count("1"))
    return total / record.shots


# ---------------------------------------------------------------------------
# characterization models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class G2Result:
    g2_zero: float
    stderr: float
    center_coincidences: int
    side_coincidences: float


def simulate_hbt(model: SourceModel, shots: int, seed, source: str = "quantum_dot",
                 mean_photons: float = 0.1) -> G2Result:
    """Pulsed Hanbury-Brown-Twiss simulation.

    Per pulse the quantum-dot source emits one photon plus an extra with
    probability ``model.multiphoton_prob``; each photon reaches detector A
    or B with probability efficiency/2.  g2(0) is the same-pulse coincidence
    rate normalized by the mean adjacent-pulse (side-peak) rate.  For this
    model g2(0) -> 2p/(1+p)^2 with p the extra-photon probability; a
    Poissonian stand-in source (``source="poisson"``) gives g2(0) = 1.
    """
    if shots < 10_000:
        raise ValueError("need at least 1e4 pulses for a stable estimate")
    rng = np.random.default_rng(seed)
    eta = model.efficiency
    if source == "quantum_dot":
        n_extra = (rng.random(shots) < model.multiphoton_prob).astype(np.int64)
        n_photons = 1 + n_extra
    elif source == "poisson":
        n_photons = rng.poisson(mean_photons, size=shots)
    else:
        raise ValueError(f"unknown source model {source!r}")
    # thin each pulse's photons into (A, B, lost)
    p_a = eta / 2.0
    clicks_a = rng.binomial(n_photons, p_a)
    rest = n_photons - clicks_a
    clicks_b = rng.binomial(rest, p_a / np.maximum(1.0 - p_a, 1e-12))
    a = clicks_a > 0
    b = clicks_b > 0
    center = int(np.sum(a & b))
    side_ab = np.sum(a[:-1] & b[1:])
    side_ba = np.sum(b[:-1] & a[1:])
    side = 0.5 * (side_ab + side_ba)
    if side == 0:
        raise ValueError("no side-peak coincidences; increase shots")
    g2 = center / side
    if center > 0:
        stderr = g2 * np.sqrt(1.0 / center + 1.0 / (side_ab + side_ba))
    else:
        stderr = 1.0 / side
    return G2Result(g2_zero=float(g2), stderr=float(stderr),
                    center_coincidences=center, side_coincidences=float(side))


def rabi_population(power: float, pi_power: float, exponent: float = 1.0) -> float:
    """XX preparation probability under two-photon excitation.

    sin^2((pi/2) (power/pi_power)^k); for two-photon excitation the pulse
    area scales linearly with power (k = 1), peaking at the pi-pulse power.
    """
    if power < 0:
        raise ValueError("power must be non-negative")
    if pi_power <= 0:
        raise ValueError("pi_power must be positive")
    return float(np.sin(0.5 * np.pi * (power / pi_power) ** exponent) ** 2)


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------

def _visibility_kernel(params: EmitterParams, grid: TimeGrid, which: str):
    """c_d such that V(delta) = c_0 + 2 sum_d c_d cos(delta d dt).

    Collapses |rho(t, t')|^2 onto time-difference diagonals so the
    detuning-averaged HOM visibility is a cheap 1-D cosine sum.
    """
    rho = reduced_density(discretize(params, grid), which).matrix
    m = np.abs(rho) ** 2 * grid.dt ** 2
    n = grid.n_bins
    c = np.array([np.trace(m, offset=d) for d in range(n)])
    return c


def _visibility_mean(kernel, dt, delta_samples):
    n = len(kernel)
    d = np.arange(1, n)
    phases = np.cos(np.outer(delta_samples, d * dt))
    return float(np.mean(kernel[0] + 2.0 * phases @ kernel[1:]))


def hom_visibility_model(params: EmitterParams, grid: TimeGrid, which: str,
                         sigma: float, n_samples: int = 200, seed: int = 7) -> float:
    """Wandering-averaged PBS-HOM visibility of the X or XX photon.

    Two interfering photons come from independent emission events, so the
    relevant detuning is the difference of two independent draws; the same
    deterministic sample stream as the fusion engine is used for
    consistency.
    """
    kernel = _visibility_kernel(params, grid, which)
    if sigma == 0.0:
        return float(kernel[0] + 2.0 * np.sum(kernel[1:]))
    wander = Wandering.independent(sigma_x=sigma, sigma_xx=sigma)
    deltas = detuning_samples(wander, n_samples, seed, params.hbar)
    col = 1 if which.lower() == "x" else 0
    diff = deltas[:, col] - deltas[:, col + 2]
    return _visibility_mean(kernel, grid.dt, diff)


def _pair_coherence_magnitude(params: EmitterParams, grid: TimeGrid) -> float:
    """|<psi_V|psi_H>| of one pair: the FSS-phase coherence loss."""
    pair = pair_state(params, grid)
    rho = pair.polarization_density()
    return float(2.0 * abs(rho[0, 3]))


def calibrate(targets: CalibrationTargets | dict | None = None,
              emitter: EmitterParams | None = None,
              grid: TimeGrid | None = None,
              depol_weight: float = 0.0,
              n_samples: int = 200,
              seed: int = 7,
              tol: float = 5e-4) -> SourceModel:
    """Fit the dephasing model to measured visibilities and pair fidelity.

    The wandering sigmas are found by bisection against the HOM visibility
    model (visibility is monotone decreasing in sigma).  The pair-fidelity
    deficit is split between a white depolarization admixture (fraction
    ``depol_weight`` of the deficit) and a fine-structure phase carrying the
    remainder; wandering is common to both decay paths of one pair and so
    cannot degrade the intra-pair coherence.  All searches are deterministic.

    Raises when a visibility target exceeds the temporal-correlation bound
    of the emitter (naming the bound), or when the pair fidelity is not
    reachable under the requested split.
    """
    if targets is None:
        targets = CalibrationTargets()
    elif isinstance(targets, dict):
        targets = CalibrationTargets(**targets)
    if emitter is None:
        emitter = nominal_emitter()
    if grid is None:
        grid = TimeGrid.default(emitter, n_bins=512)
    if not 0.0 <= depol_weight <= 1.0:
        raise ValueError("depol_weight must lie in [0, 1]")

    bound = indistinguishability_bound(emitter)
    sigmas = {}
    for which, target in (("x", targets.v_x), ("xx", targets.v_xx)):
        ceiling = hom_visibility_model(emitter, grid, which, 0.0, n_samples, seed)
        if target > min(ceiling, bound) + tol:
            raise ValueError(
                f"v_{which}={target} exceeds the temporal-correlation bound "
                f"gamma_xx/(gamma_xx+gamma_x) = {bound:.4f}"
            )
        if target >= ceiling - tol:
            sigmas[which] = 0.0
            continue
        hi = 1.0
        while hom_visibility_model(emitter, grid, which, hi, n_samples, seed) > target:
            hi *= 2.0
            if hi > 1e4:
                raise ValueError("visibility target unreachable by wandering")
        sigmas[which] = brentq(
            lambda s: hom_visibility_model(emitter, grid, which, s, n_samples, seed) - target,
            0.0, hi, xtol=1e-6,
        )

    # pair-imperfection split: depolarization eps plus FSS phase
    f_target = targets.pair_fidelity
    eps = depol_weight * (4.0 / 3.0) * (1.0 - f_target)
    coh_needed = 2.0 * (f_target - eps / 4.0) / (1.0 - eps) - 1.0
    if not 0.0 <= coh_needed <= 1.0 + 1e-9:
        raise ValueError(
            f"pair fidelity {f_target} unreachable with depol_weight={depol_weight}"
        )
    coh_needed = min(coh_needed, 1.0)
    if coh_needed >= 1.0 - 1e-12:
        fss = 0.0
    else:
        s_rad = 2.0 * emitter.gamma_x * np.sqrt(1.0 / coh_needed ** 2 - 1.0)
        fss_guess = s_rad * emitter.hbar

        def mismatch(fss_val):
            p = replace(emitter, fss=fss_val)
            return _pair_coherence_magnitude(p, grid) - coh_needed

        fss = brentq(mismatch, 0.0, 4.0 * fss_guess + 1e-6, xtol=1e-9)

    fitted = replace(emitter, sigma_x=sigmas["x"], sigma_xx=sigmas["xx"], fss=fss)
    report = {
        "targets": {"v_x": targets.v_x, "v_xx": targets.v_xx,
                    "pair_fidelity": targets.pair_fidelity},
        "sigma_x": sigmas["x"],
        "sigma_xx": sigmas["xx"],
        "fss": fss,
        "depol": eps,
        "depol_weight": depol_weight,
        "bound": bound,
        "achieved_v_x": hom_visibility_model(fitted, grid, "x", sigmas["x"], n_samples, seed),
        "achieved_v_xx": hom_visibility_model(fitted, grid, "xx", sigmas["xx"], n_samples, seed),
        "grid_bins": grid.n_bins,
        "n_samples": n_samples,
        "seed": seed,
    }
    return SourceModel(
        emitter=fitted,
        pair_fidelity_target=f_target,
        depol=eps,
        calibration=report,
    )


def pair_ensemble(model: SourceModel, grid: TimeGrid, fss_on: bool = True):
    """Weighted pure-pair components realizing the model's pair state.

    (1 - depol) of the entangled pair (with the emitter's FSS phase when
    ``fss_on``) plus depol/4 of each polarization basis state carrying the
    same temporal envelope.
    """
    emitter = model.emitter if fss_on else replace(model.emitter, fss=0.0)
    main = pair_state(emitter, grid)
    if model.depol == 0.0:
        return [(1.0, main)]
    ens = [(1.0 - model.depol, main)]
    envelope = discretize(model.emitter, grid).values
    n = grid.n_bins
    for xx_pol in (0, 1):
        for x_pol in (0, 1):
            psi = np.zeros((2, 2, n, n), dtype=complex)
            psi[xx_pol, x_pol] = envelope
            ens.append((model.depol / 4.0, PairState(grid=grid, psi=psi)))
    return ens


# ---------------------------------------------------------------------------
# end-to-end GHZ experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Estimate:
    value: float
    err: float

    def __iter__(self):
        return iter((self.value, self.err))


@dataclass(frozen=True)
class EndToEndResult:
    scheme: str
    population: Estimate
    coherence: Estimate
    fidelity: Estimate
    phase: float
    exact: FusionOutcome
    records: tuple
    metadata: dict


def _estimate_from_histograms(pop_hist, parity_vals, thetas, shots, n_qubits):
    pop = (pop_hist.get("0" * n_qubits, 0) + pop_hist.get("1" * n_qubits, 0)) / shots
    errors = np.sqrt(np.clip(1.0 - parity_vals ** 2, 1e-12, None) / shots)
    scan = CoherenceScan(thetas=thetas, values=parity_vals, errors=errors)
    fit = coherence_fit(scan, n_qubits)
    fid = ghz_fidelity(min(max(pop, 0.0), 1.0), min(fit.coherence, 1.0))
    return pop, fit, fid


def end_to_end(model: SourceModel, scheme: str, shots: int, seed,
               thetas=None, bootstrap: int = 200, grid_bins: int = 512,
               schmidt_modes: int = 12, detuning_samples_n: int = 200,
               phi_offset: float = 0.0) -> EndToEndResult:
    """Simulate the four-photon GHZ experiment for one fusion scheme.

    Builds the calibrated pair ensemble, fuses it, samples the H/V
    population setting and the M(theta) parity scan with ``shots`` each,
    runs the estimators, and bootstraps their errors (``bootstrap``
    multinomial resamples per setting).
    """
    if thetas is None:
        thetas = default_thetas()
    thetas = np.asarray(thetas, dtype=float)
    grid = TimeGrid.default(model.emitter, n_bins=grid_bins)
    ens = pair_ensemble(model, grid)
    config = FusionConfig(
        scheme=scheme,
        wandering=model.wandering(),
        schmidt_modes=schmidt_modes,
        detuning_samples=detuning_samples_n,
        seed=seed if isinstance(seed, int) else 7,
        phi_offset=phi_offset,
    )
    outcome = fuse(ens, ens, config)
    state = outcome.state
    n_q = state.n_qubits

    ss = np.random.SeedSequence(seed)
    children = ss.spawn(len(thetas) + 2)
    records = []
    pop_record = sample_outcomes(state, ["Z"] * n_q, shots, children[0])
    records.append(pop_record)
    parity_vals = []
    theta_probs = []
    for i, th in enumerate(thetas):
        rec = sample_outcomes(state, [("M", th)] * n_q, shots, children[1 + i])
        records.append(rec)
        parity_vals.append(parity_expectation(rec))
        theta_probs.append(rec)
    parity_vals = np.array(parity_vals)

    pop, fit, fid = _estimate_from_histograms(
        pop_record.histogram, parity_vals, thetas, shots, n_q)

    # bootstrap over multinomial resamples of every histogram
    rng = np.random.default_rng(children[-1])
    pop_counts = np.zeros(2 ** n_q)
    for outcome_str, c in pop_record.histogram.items():
        pop_counts[int(outcome_str, 2)] = c
    theta_counts = []
    for rec in theta_probs:
        v = np.zeros(2 ** n_q)
        for outcome_str, c in rec.histogram.items():
            v[int(outcome_str, 2)] = c
        theta_counts.append(v)
    parity_signs = np.array([(-1) ** bin(i).count("1") for i in range(2 ** n_q)])

    pop_pvals = pop_counts / pop_counts.sum()
    theta_pvals = [tc / tc.sum() for tc in theta_counts]
    boot = np.zeros((bootstrap, 3))
    for b in range(bootstrap):
        bp = rng.multinomial(shots, pop_pvals)
        bpop = (bp[0] + bp[-1]) / shots
        bvals = np.array([
            parity_signs @ rng.multinomial(shots, pv) / shots
            for pv in theta_pvals
        ])
        errors = np.sqrt(np.clip(1.0 - bvals ** 2, 1e-12, None) / shots)
        bfit = coherence_fit(CoherenceScan(thetas=thetas, values=bvals, errors=errors), n_q)
        boot[b] = (bpop, bfit.coherence,
                   ghz_fidelity(min(max(bpop, 0.0), 1.0), min(bfit.coherence, 1.0)))
    errs = boot.std(axis=0, ddof=1)

    return EndToEndResult(
        scheme=scheme,
        population=Estimate(pop, float(errs[0])),
        coherence=Estimate(fit.coherence, float(errs[1])),
        fidelity=Estimate(fid, float(errs[2])),
        phase=fit.phase,
        exact=outcome,
        records=tuple(records),
        metadata={
            "shots": shots, "seed": seed, "bootstrap": bootstrap,
            "grid_bins": grid_bins, "schmidt_modes": schmidt_modes,
            "detuning_samples": detuning_samples_n,
        },
    )
