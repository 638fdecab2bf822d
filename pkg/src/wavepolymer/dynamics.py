"""Exact Gaussian sampling of the mode oscillators.

Each mode ``n`` obeys ``dX = V dt``, ``dV = (-V + lambda_n X) dt + gamma_n dW_n``.
Paths are generated by exact one-step transitions of the joint state
``(X, V, W)``; carrying ``W`` lets the change-of-measure density be evaluated
on the same realisation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from wavepolymer import kernels
from wavepolymer.errors import ConfigError, DomainError
from wavepolymer.spectrum import DomainConfig, ModeSpec, Regime


@dataclass(frozen=True)
class ModeState:
    a: float
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.v)):
            raise DomainError("mode state must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.v])


@dataclass(frozen=True)
class TransitionKernel:
    """One exact step of length ``dt`` for the joint state ``(X, V, W)``.

    Attributes
    ----------
    mean_map : (2, 2) array
        ``exp(M dt)``.
    cov : (2, 2) array
        Innovation covariance of ``(X, V)``.
    forcing : (2,) array
        ``int_0^dt exp(M (dt - s)) e_2 ds``, the response to a unit constant
        force on the velocity.
    joint_cov : (3, 3) array
        Covariance of the innovations of ``(X, V, W)``.
    factor : (3, 3) array
        ``factor @ factor.T == joint_cov``.
    drift : (3,) array
        Deterministic increment added each step (zero unless tilted).
    """

    mean_map: np.ndarray
    cov: np.ndarray
    dt: float
    forcing: np.ndarray
    joint_cov: np.ndarray
    factor: np.ndarray
    drift: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gamma: float = 0.0

    @property
    def joint_map(self) -> np.ndarray:
        F = np.eye(3)
        F[:2, :2] = self.mean_map
        return F

    def tilted(self, a: float) -> "TransitionKernel":
        """Kernel with constant force ``a`` on the velocity.

        The force enters as ``gamma dW -> gamma (dW + (a/gamma) dt)``, so the
        recorded noise increment also gains ``(a/gamma) dt``.
        """
        if a == 0.0:
            return replace(self, drift=np.zeros(3))
        if self.gamma == 0.0:
            raise ConfigError("cannot tilt a mode with zero noise amplitude")
        d = np.empty(3)
        d[:2] = a * self.forcing
        d[2] = (a / self.gamma) * self.dt
        return replace(self, drift=d)


@dataclass
class ModePath:
    """One realised mode trajectory on the time grid.

    ``states[i] = (a_n(t_i), v_n(t_i))``; ``noise[i] = W_n(t_i)`` with
    ``W_n(0) = 0``.
    """

    mode: ModeSpec
    states: np.ndarray
    noise: np.ndarray
    rng_stream_id: tuple[int, ...] | int
    dt: float

    @property
    def a(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def v(self) -> np.ndarray:
        return self.states[:, 1]

    @property
    def n_t(self) -> int:
        return self.states.shape[0] - 1

    def state(self, i: int) -> ModeState:
        return ModeState(float(self.states[i, 0]), float(self.states[i, 1]))

    def __len__(self) -> int:
        return self.states.shape[0]


@dataclass(frozen=True)
class TiltParams:
    """Constant force ``a`` on mode 1 (``a * phi_1`` added to the noise)."""

    a: float
    target_mode: int = 1

    def __post_init__(self):
        if self.target_mode != 1:
            raise ConfigError(f"only mode 1 can be tilted, got target_mode={self.target_mode}")
        if not math.isfinite(self.a):
            raise ConfigError("tilt amplitude must be finite")


def drift_matrix(mode: ModeSpec) -> np.ndarray:
    return np.array([[0.0, 1.0], [mode.lambda_n, -1.0]])


def stationary_variance(mode: ModeSpec) -> tuple[float, float, float]:
    """Stationary covariance ``(Var a, Var v, Cov(a, v))`` of mode ``n >= 1``.

    Solves the Lyapunov equation ``M S + S M^T + diag(0, gamma^2) = 0``,
    whose solution is diagonal: ``Var a = gamma^2 / (2 k^2)`` and
    ``Var v = gamma^2 / 2`` in every regime.
    """
    if mode.n == 0:
        raise DomainError("the zero mode has no stationary law")
    g2 = mode.gamma_n**2
    return g2 / (2.0 * mode.k_n**2), g2 / 2.0, 0.0


def stationary_cov_matrix(mode: ModeSpec) -> np.ndarray:
    va, vv, cav = stationary_variance(mode)
    return np.array([[va, cav], [cav, vv]])


def stationary_mean(mode: ModeSpec, a: float = 0.0) -> np.ndarray:
    """Stationary mean under a constant velocity force ``a``: ``(a/k^2, 0)``."""
    if mode.n == 0:
        raise DomainError("the zero mode has no stationary law")
    return np.array([a / mode.k_n**2, 0.0])


def mean_map_closed_form(mode: ModeSpec, t: float) -> np.ndarray:
    """``exp(M t)`` from the regime-specific closed forms."""
    if mode.n == 0:
        e = math.exp(-t)
        return np.array([[1.0, 1.0 - e], [0.0, e]])
    h = math.exp(-t / 2.0)
    if mode.regime is Regime.CRITICAL:
        # defective case, M has the double root -1/2
        return 0.25 * h * np.array([[4.0 + 2.0 * t, 4.0 * t], [-t, 4.0 - 2.0 * t]])
    if mode.regime is Regime.UNDERDAMPED:
        w = mode.omega_n
        c, s = math.cos(w * t), math.sin(w * t)
        return h * np.array(
            [[c + s / (2.0 * w), s / w], [-(w + 1.0 / (4.0 * w)) * s, c - s / (2.0 * w)]]
        )
    w = mode.omega_n
    r1, r2 = (-1.0 + w) / 2.0, (-1.0 - w) / 2.0
    M = drift_matrix(mode)
    I = np.eye(2)
    return (math.exp(r1 * t) * (M - r2 * I) - math.exp(r2 * t) * (M - r1 * I)) / (r1 - r2)


def _psd_factor(S: np.ndarray) -> np.ndarray:
    S = 0.5 * (S + S.T)
    vals, vecs = np.linalg.eigh(S)
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)[None, :]


def build_transition(mode: ModeSpec, dt: float) -> TransitionKernel:
    """Exact transition over ``dt``.

    The mean map uses the closed form of the mode's regime. Innovation
    covariances come from the block matrix exponential of the joint
    ``(X, V, W)`` system and the forcing vector from an augmented
    exponential, both via scaling and squaring.
    """
    if not (math.isfinite(dt) and dt > 0):
        raise ConfigError(f"dt must be positive, got {dt}")
    g = mode.gamma_n
    A = np.zeros((3, 3))
    A[:2, :2] = drift_matrix(mode)
    b = np.array([0.0, g, 1.0])
    C = np.zeros((6, 6))
    C[:3, :3] = -A
    C[:3, 3:] = np.outer(b, b)
    C[3:, 3:] = A.T
    E = expm(C * dt)
    Phi = E[3:, 3:].T
    Q = Phi @ E[:3, 3:]
    Q = 0.5 * (Q + Q.T)
    Q[2, 2] = dt
    aug = np.zeros((3, 3))
    aug[:2, :2] = drift_matrix(mode)
    aug[1, 2] = 1.0
    forcing = expm(aug * dt)[:2, 2].copy()
    return TransitionKernel(
        mean_map=mean_map_closed_form(mode, dt),
        cov=Q[:2, :2].copy(),
        dt=float(dt),
        forcing=forcing,
        joint_cov=Q,
        factor=_psd_factor(Q),
        gamma=float(g),
    )


def compose(k1: TransitionKernel, k2: TransitionKernel) -> tuple[np.ndarray, np.ndarray]:
    """Mean map and covariance of ``k1`` followed by ``k2``."""
    F = k2.mean_map @ k1.mean_map
    S = k2.mean_map @ k1.cov @ k2.mean_map.T + k2.cov
    return F, S


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a logical stream id."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))))


def sample_stationary(mode: ModeSpec, rng: np.random.Generator, a: float = 0.0) -> ModeState:
    """Draw ``(a_n, v_n)`` from the stationary law (shifted by a constant force ``a``)."""
    z = rng.standard_normal(2)
    s = stationary_mean(mode, a) + _psd_factor(stationary_cov_matrix(mode)) @ z
    return ModeState(float(s[0]), float(s[1]))


def _run(kernel: TransitionKernel, s0: np.ndarray, z: np.ndarray) -> np.ndarray:
    F = kernel.joint_map[None]
    L = np.ascontiguousarray(kernel.factor[None])
    return kernels.propagate(
        np.ascontiguousarray(F), L, kernel.drift[None].copy(), s0[None].copy(), np.ascontiguousarray(z[None])
    )[0]


def evolve_path(
    mode: ModeSpec,
    init: ModeState,
    kernel: TransitionKernel,
    n_t: int,
    rng: np.random.Generator,
    stream_id: tuple[int, ...] | int = 0,
) -> ModePath:
    """Markov path of ``n_t`` exact steps from ``init``."""
    if kernel.gamma != mode.gamma_n:
        raise ConfigError("kernel was built for a different noise amplitude")
    z = rng.standard_normal((n_t, 3))
    s0 = np.array([init.a, init.v, 0.0])
    out = _run(kernel, s0, z)
    return ModePath(mode, out[:, :2].copy(), out[:, 2].copy(), stream_id, kernel.dt)


def evolve_zero_mode(
    gamma_0: float,
    init: tuple[float, float],
    dt: float,
    n_t: int,
    rng: np.random.Generator,
    J: float = 1.0,
    stream_id: tuple[int, ...] | int = 0,
) -> ModePath:
    """Exact path of the zero mode ``dX = V dt, dV = -V dt + gamma_0 dW``.

    ``X_t = x0 + v0 (1 - e^{-t}) + gamma_0 int_0^t (1 - e^{-(t-s)}) dW_s``.
    """
    from wavepolymer.spectrum import make_mode

    mode = make_mode(0, J, gamma_0)
    kernel = build_transition(mode, dt)
    return evolve_path(mode, ModeState(float(init[0]), float(init[1])), kernel, n_t, rng, stream_id)


@dataclass
class PathSet:
    """Paths of all modes of a batch of replicas.

    ``states[r, m, i, :]`` is ``(a, v)`` of mode ``m`` of replica ``r`` at
    ``t_i``; ``noise[r, m, i]`` is the matching noise record.
    """

    states: np.ndarray
    noise: np.ndarray
    modes: list[ModeSpec]
    replicas: np.ndarray
    dt: float

    @property
    def coeffs(self) -> np.ndarray:
        """Mode coefficients with time before mode: ``(R, n_t+1, N)``."""
        return np.swapaxes(self.states[..., 0], 1, 2)

    def mode_paths(self, r: int = 0) -> list[ModePath]:
        return [
            ModePath(m, self.states[r, j], self.noise[r, j], (int(self.replicas[r]), m.n), self.dt)
            for j, m in enumerate(self.modes)
        ]


@dataclass
class LatentNoise:
    """Standard normal inputs that determine a batch of paths.

    ``init[r, m]`` drives the stationary initial state and ``steps[r, m, i]``
    the innovations of step ``i``.
    """

    init: np.ndarray
    steps: np.ndarray

    def mix(self, other: "LatentNoise", rho: float, window: tuple[int, int] | None = None) -> "LatentNoise":
        """``sqrt(1 - rho^2) self + rho other``, optionally only inside a step window."""
        c = math.sqrt(max(1.0 - rho * rho, 0.0))
        if window is None:
            return LatentNoise(c * self.init + rho * other.init, c * self.steps + rho * other.steps)
        lo, hi = window
        steps = self.steps.copy()
        steps[:, :, lo:hi] = c * self.steps[:, :, lo:hi] + rho * other.steps[:, :, lo:hi]
        return LatentNoise(self.init.copy(), steps)


class PathGenerator:
    """Reproducible sampler of full multi-mode paths.

    Replica ``r``, mode ``n`` draws from the stream keyed ``(r, n)`` of the
    configured seed, so results do not depend on scheduling or batching.
    Modes ``n >= 1`` start from their stationary law; the zero mode, which
    has none, starts from ``zero_init``.
    """

    def __init__(
        self,
        cfg: DomainConfig,
        modes: Sequence[ModeSpec],
        tilt: TiltParams | None = None,
        zero_init: tuple[float, float] = (0.0, 0.0),
        tilted_init: bool = True,
    ):
        self.cfg = cfg
        self.modes = list(modes)
        if not self.modes:
            raise ConfigError("at least one mode required")
        self.tilt = tilt if tilt is not None else TiltParams(0.0)
        self.zero_init = (float(zero_init[0]), float(zero_init[1]))
        self.tilted_init = tilted_init
        base = [build_transition(m, cfg.dt) for m in self.modes]
        self.kernels = [
            k.tilted(self.tilt.a) if (m.n == self.tilt.target_mode and self.tilt.a != 0.0) else k
            for m, k in zip(self.modes, base)
        ]
        if self.tilt.a != 0.0 and not any(m.n == self.tilt.target_mode for m in self.modes):
            raise ConfigError("tilt targets mode 1 which is not simulated")
        self._F = np.stack([k.joint_map for k in self.kernels])
        self._L = np.stack([k.factor for k in self.kernels])
        self._drift = np.stack([k.drift for k in self.kernels])
        means, facs = [], []
        for m in self.modes:
            if m.n == 0:
                means.append(np.array(self.zero_init))
                facs.append(np.zeros((2, 2)))
            else:
                a = self.tilt.a if (m.n == self.tilt.target_mode and tilted_init) else 0.0
                means.append(stationary_mean(m, a))
                facs.append(_psd_factor(stationary_cov_matrix(m)))
        self._init_mean = np.stack(means)
        self._init_fac = np.stack(facs)

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def with_tilt(self, tilt: TiltParams, tilted_init: bool = True) -> "PathGenerator":
        return PathGenerator(self.cfg, self.modes, tilt, self.zero_init, tilted_init)

    def white_noise(self, replicas) -> LatentNoise:
        """Latent normals for the given replica ids."""
        reps = np.atleast_1d(np.asarray(replicas, dtype=np.int64))
        N, n_t = self.n_modes, self.cfg.n_t
        init = np.empty((reps.size, N, 2))
        steps = np.empty((reps.size, N, n_t, 3))
        for i, r in enumerate(reps):
            for j, m in enumerate(self.modes):
                g = stream_rng(self.cfg.seed, int(r), m.n)
                init[i, j] = g.standard_normal(2)
                steps[i, j] = g.standard_normal((n_t, 3))
        return LatentNoise(init, steps)

    def from_white(self, z: LatentNoise, replicas=None) -> PathSet:
        R, N = z.init.shape[:2]
        s0 = np.zeros((R, N, 3))
        s0[..., :2] = self._init_mean[None] + np.einsum("mij,rmj->rmi", self._init_fac, z.init)
        B = R * N
        F = np.ascontiguousarray(np.broadcast_to(self._F[None], (R, N, 3, 3)).reshape(B, 3, 3))
        L = np.ascontiguousarray(np.broadcast_to(self._L[None], (R, N, 3, 3)).reshape(B, 3, 3))
        drift = np.ascontiguousarray(np.broadcast_to(self._drift[None], (R, N, 3)).reshape(B, 3))
        out = kernels.propagate(F, L, drift, s0.reshape(B, 3), np.ascontiguousarray(z.steps.reshape(B, -1, 3)))
        out = out.reshape(R, N, -1, 3)
        reps = np.arange(R) if replicas is None else np.atleast_1d(np.asarray(replicas))
        return PathSet(out[..., :2].copy(), out[..., 2].copy(), self.modes, reps, self.cfg.dt)

    def batch(self, replicas) -> PathSet:
        reps = np.atleast_1d(np.asarray(replicas, dtype=np.int64))
        return self.from_white(self.white_noise(reps), reps)

    def paths(self, replica: int) -> list[ModePath]:
        return self.batch([replica]).mode_paths(0)


def apply_tilt(generator: PathGenerator, tilt: TiltParams) -> PathGenerator:
    """Generator whose mode-1 dynamics carry the constant force ``tilt.a``.

    Uses the same streams, so ``a = 0`` reproduces the untilted paths bit for
    bit.
    """
    if tilt.target_mode != 1:
        raise ConfigError("only mode 1 can be tilted")
    return generator.with_tilt(tilt, generator.tilted_init)
