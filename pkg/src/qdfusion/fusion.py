"""Linear-optical interference: PBS HOM, single- and double-PBS fusion.

A polarizing beam splitter transmits H and reflects V.  Feeding one photon
into each input and keeping only the events with one photon per output
post-selects the two photons onto equal polarizations, which is the fusion
primitive used to concatenate entangled pairs.

Interfering only the X photons (or only the XX photons) of two cascade
pairs leaves the fused coherence limited by the interfered photon's reduced
purity, i.e. by the temporal correlation of the cascade.  Interfering X and
XX photons simultaneously on two PBSs makes the post-selected amplitudes
carry complete pair wavefunctions per output side, so the four-photon
polarization coherence is governed by whole-pair overlaps and the temporal
correlation drops out.

The fusion engine tracks the temporal degree of freedom in a truncated
Schmidt-mode basis per polarization block.  Spectral wandering enters as a
per-emission-event rigid detuning of each line, averaged over a
deterministic low-discrepancy sample set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, qmc

from .cascade import EmitterParams, PairState, TemporalDensity
from .polarization import PolarizationState

SCHEMES = ("double_pbs", "single_pbs_x", "single_pbs_xx")

H, V = 0, 1


@dataclass(frozen=True)
class Wandering:
    """Spectral-wandering model for the two emission lines.

    ``off``: no wandering.  ``independent``: each line drifts with its own
    Gaussian sigma [ueV].  ``correlated``: one shared drift moves both lines
    rigidly (common charge noise).
    """

    mode: str = "off"
    sigma_x: float = 0.0
    sigma_xx: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if self.mode not in ("off", "independent", "correlated"):
            raise ValueError(f"unknown wandering mode {self.mode!r}")
        if min(self.sigma_x, self.sigma_xx, self.sigma) < 0:
            raise ValueError("wandering sigmas must be non-negative")

    @classmethod
    def off(cls):
        return cls(mode="off")

    @classmethod
    def independent(cls, sigma_x, sigma_xx):
        return cls(mode="independent", sigma_x=sigma_x, sigma_xx=sigma_xx)

    @classmethod
    def correlated(cls, sigma):
        return cls(mode="correlated", sigma=sigma)

    @property
    def is_off(self):
        if self.mode == "off":
            return True
        if self.mode == "independent":
            return self.sigma_x == 0.0 and self.sigma_xx == 0.0
        return self.sigma == 0.0


@dataclass(frozen=True)
class FusionConfig:
    """Configuration of a fusion run.

    ``fss_on`` controls whether pair-building helpers include the emitter's
    fine-structure phase (states passed to :func:`fuse` are used as given).
    ``detuning_samples`` sets the size of the deterministic low-discrepancy
    sample set used to average over wandering detunings; ``seed`` fixes the
    scrambling so results are reproducible bit-for-bit.
    """

    scheme: str = "double_pbs"
    fss_on: bool = True
    wandering: Wandering = field(default_factory=Wandering.off)
    schmidt_modes: int = 8
    detuning_samples: int = 200
    seed: int = 7
    phi_offset: float = 0.0
    max_residual: float = 2e-2

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.schmidt_modes < 1:
            raise ValueError("schmidt_modes must be >= 1")
        if self.detuning_samples < 1:
            raise ValueError("detuning_samples must be >= 1")


@dataclass(frozen=True)
class FusionOutcome:
    """Post-selected four-photon polarization state with diagnostics.

    ``population`` is p(HHHH) + p(VVVV) of the normalized state,
    ``coherence`` is 2 |<HHHH| rho |VVVV>|, and ``phase`` the GHZ phase the
    coherence points at (state ~ GHZ(phase) in the ideal sector).
    ``success_probability`` is the one-photon-per-output post-selection
    probability.
    """

    state: PolarizationState
    success_probability: float
    population: float
    coherence: float
    phase: float
    truncation_residual: float = 0.0


# ---------------------------------------------------------------------------
# PBS primitive
# ---------------------------------------------------------------------------

def pbs_mode_matrix():
    """Unitary of the PBS on modes (a,H), (a,V), (b,H), (b,V) -> (c,H), (c,V), (d,H), (d,V).

    H transmits (a->c, b->d), V reflects (a->d, b->c); a permutation, hence
    manifestly unitary.
    """
    m = np.zeros((4, 4))
    m[0, 0] = 1.0  # aH -> cH
    m[3, 1] = 1.0  # aV -> dV
    m[2, 2] = 1.0  # bH -> dH
    m[1, 3] = 1.0  # bV -> cV
    return m


def pbs_mode_transform(input_modes):
    """Apply the PBS to an amplitude array indexed [input a|b, pol H|V].

    Returns the array indexed [output c|d, pol H|V].
    """
    amp = np.asarray(input_modes, dtype=complex)
    if amp.shape != (2, 2):
        raise ValueError("expected amplitudes indexed [input(2), pol(2)]")
    out = np.zeros((2, 2), dtype=complex)
    out[0, H] = amp[0, H]   # transmit
    out[1, H] = amp[1, H]
    out[1, V] = amp[0, V]   # reflect
    out[0, V] = amp[1, V]
    return out


# ---------------------------------------------------------------------------
# PBS-type Hong-Ou-Mandel
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HomResult:
    visibility: float
    prob_parallel: float   # |DD> coincidence probability
    prob_cross: float      # |DA> coincidence probability


def hom_pbs(photon_a: TemporalDensity, photon_b: TemporalDensity) -> HomResult:
    """PBS-type HOM interference of two single photons prepared in |D>.

    The parallel/cross coincidence contrast equals the mean wavepacket
    overlap Tr(rho_a rho_b); for two photons with identical preparation this
    is the reduced-state purity, i.e. the temporal-correlation bound on
    visibility.
    """
    if photon_a.grid.n_bins != photon_b.grid.n_bins or \
            abs(photon_a.grid.t_max - photon_b.grid.t_max) > 1e-9:
        raise ValueError("photons must share the time grid")
    for name, p in (("a", photon_a), ("b", photon_b)):
        tr = p.trace()
        if abs(tr - 1.0) > 1e-6:
            raise ValueError(f"photon {name} not normalized (trace {tr:.8f})")
    dt = photon_a.grid.dt
    vis = float(np.real(np.sum(photon_a.matrix * photon_b.matrix.T)) * dt * dt)
    return HomResult(
        visibility=vis,
        prob_parallel=(1.0 + vis) / 8.0,
        prob_cross=(1.0 - vis) / 8.0,
    )


# ---------------------------------------------------------------------------
# detuning sampling
# ---------------------------------------------------------------------------

def detuning_samples(wandering: Wandering, n_samples: int, seed: int, hbar: float):
    """Deterministic Gaussian detuning draws for two pairs, shape (S, 4).

    Columns are (pair-a XX, pair-a X, pair-b XX, pair-b X) detunings in
    rad/ps.  Uses a scrambled Halton sequence mapped through the normal
    quantile function: low-discrepancy, reproducible for a fixed seed, and
    independent of any global RNG state.
    """
    if wandering.is_off:
        return np.zeros((1, 4))
    if wandering.mode == "independent":
        u = qmc.Halton(d=4, scramble=True, seed=seed).random(n_samples)
        z = norm.ppf(np.clip(u, 1e-12, 1.0 - 1e-12))
        scale = np.array([wandering.sigma_xx, wandering.sigma_x,
                          wandering.sigma_xx, wandering.sigma_x]) / hbar
        return z * scale
    if wandering.mode == "correlated":
        u = qmc.Halton(d=2, scramble=True, seed=seed).random(n_samples)
        z = norm.ppf(np.clip(u, 1e-12, 1.0 - 1e-12)) * wandering.sigma / hbar
        return np.column_stack([z[:, 0], z[:, 0], z[:, 1], z[:, 1]])
    raise ValueError(f"unsupported wandering model {wandering.mode!r}")


# ---------------------------------------------------------------------------
# fusion engine (Schmidt modes)
# ---------------------------------------------------------------------------

def _as_ensemble(pair):
    """Normalize input to a list of (weight, PairState)."""
    if isinstance(pair, PairState):
        return [(1.0, pair)]
    ens = list(pair)
    total = sum(w for w, _ in ens)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"ensemble weights must sum to 1, got {total}")
    return ens


def _scheme_wiring(scheme):
    interfere_xx = scheme in ("double_pbs", "single_pbs_xx")
    interfere_x = scheme in ("double_pbs", "single_pbs_x")
    return interfere_xx, interfere_x


def _allowed_strings(scheme):
    """Four-photon H/V strings with nonzero post-selected amplitude.

    Qubit order (c1, d1, c2, d2): the two XX-side detectors then the two
    X-side detectors.  Interfered photons exit with equal polarizations
    (H transmits both, V reflects both); unequal ones bunch into one arm and
    fail the one-photon-per-output condition.
    """
    interfere_xx, interfere_x = _scheme_wiring(scheme)
    strings = []
    for x1 in (H, V):
        for x2 in (H, V):
            if interfere_xx and x1 != x2:
                continue
            for p1 in (H, V):
                for p2 in (H, V):
                    if interfere_x and p1 != p2:
                        continue
                    strings.append((x1, x2, p1, p2))
    return strings


def _routing(scheme, string):
    """Which pair's photon sits at each detector, and each pair's block.

    Returns (holders, blocks): ``holders[d]`` for detectors (c1, d1, c2, d2)
    is 0 for the early pair and 1 for the late pair; ``blocks[p]`` is the
    (xx_pol, x_pol) polarization component pair p contributes.
    """
    x1, x2, p1, p2 = string
    interfere_xx, interfere_x = _scheme_wiring(scheme)
    if interfere_xx:
        # equal pols; H: a transmits to c1, V: a reflects to d1
        hold_xx = (0, 1) if x1 == H else (1, 0)
        xx_pol = {0: x1, 1: x1}
    else:
        hold_xx = (0, 1)
        xx_pol = {0: x1, 1: x2}
    if interfere_x:
        hold_x = (0, 1) if p1 == H else (1, 0)
        x_pol = {0: p1, 1: p1}
    else:
        hold_x = (0, 1)
        x_pol = {0: p1, 1: p2}
    holders = (hold_xx[0], hold_xx[1], hold_x[0], hold_x[1])
    blocks = {p: (xx_pol[p], x_pol[p]) for p in (0, 1)}
    return holders, blocks


_DET_AXIS = ("xx", "xx", "x", "x")
_UNCONJ_CHAR = ("a", "b")
_CONJ_CHAR = ("c", "d")


class _BlockModes:
    """Truncated Schmidt data of one polarization block of one pair."""

    __slots__ = ("coeffs", "modes_xx", "modes_x", "residual", "weight")

    def __init__(self, psi, dt, max_modes):
        u, s, vh = np.linalg.svd(psi)
        lam = s * dt
        total = float(np.sum(lam ** 2))
        k = min(max_modes, len(lam))
        kept = float(np.sum(lam[:k] ** 2))
        self.weight = total
        self.residual = total - kept
        if kept > 0:
            # renormalize so the truncated block keeps its weight
            scale = np.sqrt(total / kept)
        else:
            scale = 1.0
        self.coeffs = lam[:k] * scale
        self.modes_xx = (u[:, :k] / np.sqrt(dt)).T
        self.modes_x = vh[:k, :] / np.sqrt(dt)


def _decompose_pair(pair: PairState, max_modes):
    """Schmidt data for each nonzero polarization block, keyed (xx_pol, x_pol)."""
    dt = pair.grid.dt
    blocks = {}
    residual = 0.0
    for xx_pol in (H, V):
        for x_pol in (H, V):
            psi = pair.psi[xx_pol, x_pol]
            if not np.any(psi):
                continue
            data = _BlockModes(psi, dt, max_modes)
            blocks[(xx_pol, x_pol)] = data
            residual += data.residual
    return blocks, residual


def _overlap(modes_u, modes_v, mask, dt):
    """O[s, k, l] = sum_t modes_u[k, t] conj(modes_v[l, t]) mask[s, t] dt."""
    if mask.shape[0] == 1:
        flat = (modes_u * mask[0]) @ modes_v.conj().T
        return flat[None, :, :] * dt
    return np.einsum("st,kt,lt->skl", mask, modes_u, modes_v.conj(), optimize=True) * dt


def _post_selected(decomp_a, decomp_b, scheme, deltas, grid):
    """Unnormalized 16x16 post-selected matrix, averaged over detunings.

    ``decomp_a``/``decomp_b`` are lists of (weight, blocks) with blocks the
    per-polarization Schmidt data from :func:`_decompose_pair`.
    """
    n_samples = deltas.shape[0]
    dt = grid.dt
    t = grid.centers()
    # phase masks between unconjugated pair u and conjugated pair v, per axis
    masks = {}
    for axis, cols in (("xx", (0, 2)), ("x", (1, 3))):
        d_a, d_b = deltas[:, cols[0]], deltas[:, cols[1]]
        diff = {  # (u, v): delta_u - delta_v
            (0, 0): None, (1, 1): None,
            (0, 1): d_a - d_b, (1, 0): d_b - d_a,
        }
        masks[axis] = {
            uv: (np.ones((1, len(t))) if d is None else np.exp(-1j * np.outer(d, t)))
            for uv, d in diff.items()
        }

    strings = _allowed_strings(scheme)
    index = {s: s[0] * 8 + s[1] * 4 + s[2] * 2 + s[3] for s in strings}
    rho = np.zeros((n_samples, 16, 16), dtype=complex)

    for wa, blocks_a in decomp_a:
        for wb, blocks_b in decomp_b:
            weight = wa * wb
            cache = {}
            for s1 in strings:
                hold1, blk1 = _routing(scheme, s1)
                if blk1[0] not in blocks_a or blk1[1] not in blocks_b:
                    continue
                for s2 in strings:
                    if index[s2] < index[s1]:
                        continue  # fill upper triangle, mirror later
                    hold2, blk2 = _routing(scheme, s2)
                    if blk2[0] not in blocks_a or blk2[1] not in blocks_b:
                        continue
                    data1 = {0: blocks_a[blk1[0]], 1: blocks_b[blk1[1]]}
                    data2 = {0: blocks_a[blk2[0]], 1: blocks_b[blk2[1]]}
                    ops = []
                    script = []
                    for det in range(4):
                        axis = _DET_AXIS[det]
                        u_pair, v_pair = hold1[det], hold2[det]
                        key = (axis, u_pair, id(data1[u_pair]), v_pair, id(data2[v_pair]))
                        if key not in cache:
                            fu = data1[u_pair].modes_xx if axis == "xx" else data1[u_pair].modes_x
                            fv = data2[v_pair].modes_xx if axis == "xx" else data2[v_pair].modes_x
                            cache[key] = _overlap(fu, fv, masks[axis][(u_pair, v_pair)], dt)
                        ops.append(cache[key])
                        script.append("s" + _UNCONJ_CHAR[u_pair] + _CONJ_CHAR[v_pair])
                    subs = ",".join(script) + ",a,b,c,d->s"
                    elem = np.einsum(
                        subs, *ops,
                        data1[0].coeffs, data1[1].coeffs,
                        data2[0].coeffs, data2[1].coeffs,
                        optimize=True,
                    )
                    i, j = index[s1], index[s2]
                    rho[:, i, j] += weight * elem
                    if i != j:
                        rho[:, j, i] += weight * elem.conj()
    return rho.mean(axis=0)


def _apply_phase_offset(rho, phi_offset):
    if phi_offset == 0.0:
        return rho
    bits = np.array([bin(i).count("1") for i in range(16)])
    phases = np.exp(1j * phi_offset * bits / 4.0)
    return rho * np.outer(phases, phases.conj())


def _outcome_from_matrix(rho_raw, phi_offset, residual):
    rho_raw = _apply_phase_offset(rho_raw, phi_offset)
    success = float(np.real(np.trace(rho_raw)))
    if success <= 0:
        raise ValueError("post-selection probability vanished")
    rho = rho_raw / success
    rho = 0.5 * (rho + rho.conj().T)
    state = PolarizationState(4, rho)
    pop = float(np.real(rho[0, 0] + rho[15, 15]))
    coh = 2.0 * abs(rho[0, 15])
    phase = float(-np.angle(rho[0, 15])) if coh > 0 else 0.0
    return FusionOutcome(
        state=state,
        success_probability=success,
        population=pop,
        coherence=coh,
        phase=phase,
        truncation_residual=residual,
    )


def fuse(pair_early, pair_late, config: FusionConfig) -> FusionOutcome:
    """Fuse two cascade pairs on the configured PBS arrangement.

    ``pair_early``/``pair_late`` are :class:`~qdfusion.cascade.PairState`
    objects built on the same grid, or ensembles of (weight, PairState)
    pairs for mixed inputs.  For ``double_pbs`` both the X photons and the
    XX photons interfere; for ``single_pbs_*`` only the named photons
    interfere and the other two pass straight to their detectors.

    Post-selecting one photon per output projects onto the polarization
    strings listed by :func:`_allowed_strings`; the temporal modes are then
    traced out in the truncated Schmidt basis.  Raises when the Schmidt
    truncation residual exceeds ``config.max_residual``.
    """
    ens_a = _as_ensemble(pair_early)
    ens_b = _as_ensemble(pair_late)
    grid = ens_a[0][1].grid
    for _, p in ens_a + ens_b:
        if p.grid.n_bins != grid.n_bins or abs(p.grid.t_max - grid.t_max) > 1e-9:
            raise ValueError("pairs must share one time grid")
    hbar = EmitterParams.__dataclass_fields__["hbar"].default
    deltas = detuning_samples(config.wandering, config.detuning_samples, config.seed, hbar)

    residual = 0.0
    decomp_a, decomp_b = [], []
    for ens, decomp in ((ens_a, decomp_a), (ens_b, decomp_b)):
        for w, p in ens:
            blocks, res = _decompose_pair(p, config.schmidt_modes)
            residual = max(residual, res)
            decomp.append((w, blocks))
    if residual > config.max_residual:
        raise ValueError(
            f"Schmidt truncation residual {residual:.3e} exceeds "
            f"max_residual={config.max_residual:.1e}; increase schmidt_modes"
        )
    rho_raw = _post_selected(decomp_a, decomp_b, config.scheme, deltas, grid)
    return _outcome_from_matrix(rho_raw, config.phi_offset, residual)


# ---------------------------------------------------------------------------
# full-grid reference (no Schmidt truncation)
# ---------------------------------------------------------------------------

def _fuse_direct(pair_early: PairState, pair_late: PairState, config: FusionConfig) -> FusionOutcome:
    """Direct full-grid contraction of the post-selected state.

    Same routing as :func:`fuse` but contracts the complete discretized
    amplitudes with no mode truncation.  Kept as an independent check of the
    Schmidt engine; cost grows steeply with the grid, so use modest grids.
    """
    grid = pair_early.grid
    dt = grid.dt
    t = grid.centers()
    hbar = EmitterParams.__dataclass_fields__["hbar"].default
    deltas = detuning_samples(config.wandering, config.detuning_samples, config.seed, hbar)
    strings = _allowed_strings(config.scheme)
    index = {s: s[0] * 8 + s[1] * 4 + s[2] * 2 + s[3] for s in strings}
    letters = "ijkl"  # detector time indices c1 d1 c2 d2

    rho_raw = np.zeros((16, 16), dtype=complex)
    for sample in range(deltas.shape[0]):
        d = deltas[sample]
        phased = []
        for p, pair in enumerate((pair_early, pair_late)):
            mask = np.exp(-1j * (d[2 * p] * t[:, None] + d[2 * p + 1] * t[None, :]))
            phased.append(pair.psi * mask[None, None, :, :])
        for s1 in strings:
            hold1, blk1 = _routing(config.scheme, s1)
            for s2 in strings:
                if index[s2] < index[s1]:
                    continue
                hold2, blk2 = _routing(config.scheme, s2)
                # detector letters per pair and axis, for each side
                def subs_for(hold):
                    out = {}
                    for p in (0, 1):
                        xx_det = hold[:2].index(p)
                        x_det = hold[2:].index(p) + 2
                        out[p] = letters[xx_det] + letters[x_det]
                    return out
                sub1, sub2 = subs_for(hold1), subs_for(hold2)
                args = [
                    phased[0][blk1[0]], phased[1][blk1[1]],
                    phased[0][blk2[0]].conj(), phased[1][blk2[1]].conj(),
                ]
                script = f"{sub1[0]},{sub1[1]},{sub2[0]},{sub2[1]}->"
                elem = np.einsum(script, *args, optimize=True) * dt ** 4
                i, j = index[s1], index[s2]
                rho_raw[i, j] += elem
                if i != j:
                    rho_raw[j, i] += np.conj(elem)
    rho_raw /= deltas.shape[0]
    return _outcome_from_matrix(rho_raw, config.phi_offset, 0.0)


# ---------------------------------------------------------------------------
# analytic fast path
# ---------------------------------------------------------------------------

def _cf_pair_overlap(gxx, gx, ax, bx):
    """Closed-form int |psi|^2 exp(-i ax t1 - i bx t2) dt1 dt2."""
    return (2 * gxx / (2 * gxx + 1j * (ax + bx))) * (2 * gx / (2 * gx + 1j * bx))


def _cf_single_x(gxx, gx, s, dx):
    """Closed-form trace of the crossed X-photon operators with FSS phase s
    and X-line detuning difference dx (both rad/ps)."""
    g = gxx - gx
    b = 2 * g + 1j * s
    alpha = 4 * gx - 2j * s
    m_int = 1.0 / alpha - 2.0 / (alpha + b) + 1.0 / (alpha + 2 * b)
    w_int = 1.0 / (2 * gx - 1j * s - 1j * dx) + 1.0 / (2 * gx - 1j * s + 1j * dx)
    return (4 * gxx * gx) ** 2 / b ** 2 * m_int * w_int


def _cf_single_xx(gxx, gx, s, dxx):
    """Same for the crossed XX-photon operators and XX-line detuning."""
    denom = 2 * gx - 1j * s
    w_int = 1.0 / (2 * gxx + 2 * gx - 1j * s - 1j * dxx) \
        + 1.0 / (2 * gxx + 2 * gx - 1j * s + 1j * dxx)
    return (4 * gxx * gx) ** 2 / denom ** 2 / (4 * gxx) * w_int


def fuse_analytic(params: EmitterParams, config: FusionConfig) -> FusionOutcome:
    """Fusion outcome from closed-form overlap integrals (no grid).

    Double-PBS coherence per detuning sample is the product of the two
    cross-pair whole-wavefunction overlaps; single-PBS coherence is the
    trace of the interfered photon's crossed reduced operators.  Averages
    over the same deterministic detuning samples as :func:`fuse` and must
    agree with it within the grid accuracy.

    Supports the pure cascade model only (no ensemble admixtures); wandering
    must be off or Gaussian (the only models defined here).
    """
    gxx, gx = params.gamma_xx, params.gamma_x
    s = params.fss / params.hbar if config.fss_on else 0.0
    deltas = detuning_samples(config.wandering, config.detuning_samples, config.seed, params.hbar)
    dxx = deltas[:, 0] - deltas[:, 2]
    dx = deltas[:, 1] - deltas[:, 3]

    if config.scheme == "double_pbs":
        term1 = _cf_pair_overlap(gxx, gx, dxx + s, dx - s)
        term2 = _cf_pair_overlap(gxx, gx, -dxx + s, -dx - s)
        elem = np.mean(term1 * term2)
    elif config.scheme == "single_pbs_x":
        elem = np.mean(_cf_single_x(gxx, gx, s, dx))
    elif config.scheme == "single_pbs_xx":
        elem = np.mean(_cf_single_xx(gxx, gx, s, dxx))
    else:  # pragma: no cover - config validation catches this
        raise ValueError(f"unsupported scheme {config.scheme!r}")

    rho_raw = np.zeros((16, 16), dtype=complex)
    rho_raw[0, 0] = rho_raw[15, 15] = 0.25
    rho_raw[0, 15] = 0.25 * elem
    rho_raw[15, 0] = 0.25 * np.conj(elem)
    return _outcome_from_matrix(rho_raw, config.phi_offset, 0.0)
