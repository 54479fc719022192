"""Switched fiber-loop protocol: N-photon GHZ states from one emitter.

Two optical switches route the first emitted pair into a fiber loop; each
following pair interferes with the stored photons at the loop PBS.  One
half of the interfered photons leaves toward the detectors while the other
half is stored for the next round, so a single sequentially emitting source
grows a GHZ state two photons per period, addressed in the time domain.

Each loop passage acts like the double-PBS fusion step of the four-photon
experiment (the X and XX interferences share one physical PBS at different
times), so the polarization coherence stays decoupled from the temporal
correlation: lossless and without wandering the output coherence is one for
any decay-rate ratio.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, qmc

from .cascade import EmitterParams, TimeGrid, pair_state
from .fusion import Wandering, _cf_pair_overlap
from .polarization import MAX_QUBITS, PolarizationState


@dataclass(frozen=True)
class LoopConfig:
    """Geometry and budget of the loop apparatus.

    ``loop_loss`` and ``switch_loss`` are transmissions (1 = lossless) per
    round trip and per switch pass; ``period`` is the emission period [ns].
    """

    n_photons: int
    loop_loss: float = 1.0
    switch_loss: float = 1.0
    period: float = 1.5

    def __post_init__(self):
        if self.n_photons < 2:
            raise ValueError("n_photons must be >= 2")
        for name in ("loop_loss", "switch_loss"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if not self.period > 0:
            raise ValueError("period must be positive")


@dataclass(frozen=True)
class SwitchSchedule:
    """Ordered, non-overlapping switch windows: (t_start, t_end, route)."""

    windows: tuple

    def __post_init__(self):
        last_end = -np.inf
        for t0, t1, route in self.windows:
            if t1 <= t0:
                raise ValueError("window must have positive duration")
            if t0 < last_end:
                raise ValueError("windows must be ordered and non-overlapping")
            if route not in (1, 2):
                raise ValueError("route must be 1 or 2")
            last_end = t1


def schedule(config: LoopConfig) -> SwitchSchedule:
    """Switch program: first period routes the pair into the loop (route 1),
    every following period routes the new pair onto the PBS (route 2)."""
    periods = config.n_photons // 2
    windows = []
    for k in range(periods):
        route = 1 if k == 0 else 2
        windows.append((k * config.period, (k + 1) * config.period, route))
    return SwitchSchedule(windows=tuple(windows))


@dataclass(frozen=True)
class LoopResult:
    state: PolarizationState
    success_probability: float
    coherence: float
    phase: float


def _loop_detunings(wandering: Wandering, n_pairs, n_samples, seed, hbar):
    """Per-pair (XX, X) detuning draws, shape (S, n_pairs, 2), rad/ps."""
    if wandering.is_off:
        return np.zeros((1, n_pairs, 2))
    if wandering.mode == "independent":
        u = qmc.Halton(d=2 * n_pairs, scramble=True, seed=seed).random(n_samples)
        z = norm.ppf(np.clip(u, 1e-12, 1.0 - 1e-12)).reshape(n_samples, n_pairs, 2)
        scale = np.array([wandering.sigma_xx, wandering.sigma_x]) / hbar
        return z * scale
    if wandering.mode == "correlated":
        u = qmc.Halton(d=n_pairs, scramble=True, seed=seed).random(n_samples)
        z = norm.ppf(np.clip(u, 1e-12, 1.0 - 1e-12)) * wandering.sigma / hbar
        return np.repeat(z[:, :, None], 2, axis=2)
    raise ValueError(f"unsupported wandering model {wandering.mode!r}")


def simulate_loop(config: LoopConfig, emitter: EmitterParams,
                  wandering: Wandering | None = None,
                  n_samples: int = 200, seed: int = 7,
                  grid: TimeGrid | None = None) -> LoopResult:
    """Simulate the loop protocol for an even photon number up to 6.

    The H^N branch always stores the newest pair while the V^N branch keeps
    the first pair circulating, so the two branches accumulate whole-pair
    cross overlaps step by step, exactly the double-PBS fusion semantics
    applied photon-by-photon.  The coherence is the wandering average of the
    product of those overlaps; populations are unaffected by the phases.

    Post-selecting one photon per addressed time bin makes linear loss a
    multiplicative success factor: each of the two stored photons incurs
    loop_loss * switch_loss per period spent in the loop, giving
    (loop_loss * switch_loss)^(n_photons - 2) on top of the 1/2 per fusion
    step.
    """
    n = config.n_photons
    if n % 2 != 0 or n > MAX_QUBITS:
        raise ValueError(f"n_photons must be even and <= {MAX_QUBITS}, got {n}")
    if wandering is None:
        wandering = Wandering.off()
    gxx, gx = emitter.gamma_xx, emitter.gamma_x
    s = emitter.fss / emitter.hbar
    n_pairs = n // 2
    steps = n_pairs - 1

    if n_pairs == 1:
        if grid is None:
            grid = TimeGrid.default(emitter)
        rho_pair = pair_state(emitter, grid).polarization_density()
        state = PolarizationState(2, rho_pair)
        coh = 2.0 * abs(rho_pair[0, 3])
        phase = float(-np.angle(rho_pair[0, 3])) if coh > 0 else 0.0
        return LoopResult(state=state, success_probability=1.0,
                          coherence=coh, phase=phase)

    deltas = _loop_detunings(wandering, n_pairs, n_samples, seed, emitter.hbar)
    # step k: detectors of period k compare pair k (H branch) with pair k+1
    # (V branch); the final time bin compares the last pair with pair 1.
    product = np.ones(deltas.shape[0], dtype=complex)
    for k in range(steps):
        dxx = deltas[:, k, 0] - deltas[:, k + 1, 0]
        dx = deltas[:, k, 1] - deltas[:, k + 1, 1]
        product = product * _cf_pair_overlap(gxx, gx, dxx + s, dx - s)
    dxx = deltas[:, -1, 0] - deltas[:, 0, 0]
    dx = deltas[:, -1, 1] - deltas[:, 0, 1]
    product = product * _cf_pair_overlap(gxx, gx, dxx + s, dx - s)
    elem = complex(np.mean(product))

    dim = 2 ** n
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = rho[-1, -1] = 0.5
    rho[0, -1] = 0.5 * elem
    rho[-1, 0] = 0.5 * np.conj(elem)
    state = PolarizationState(n, rho)
    transmission = (config.loop_loss * config.switch_loss) ** (n - 2)
    success = 0.5 ** steps * transmission
    coh = float(abs(elem))
    phase = float(-np.angle(elem)) if coh > 0 else 0.0
    return LoopResult(state=state, success_probability=success,
                      coherence=coh, phase=phase)
