"""Plant and trigger domain types, plus exact inter-event propagation.

Between communication events the closed loop is linear in (xhat, z):
the estimate follows the nominal feedback dynamics while the estimation
error z = x - xhat obeys zdot = A z independently of the input.  Both
factors admit exact transition matrices, so propagation is free of
integrator error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, DivergenceError, PreconditionError

# States beyond this magnitude abort a run as diverged.
OVERFLOW_LIMIT = 1e12


@dataclass(frozen=True)
class ScalarPlant:
    """First-order unstable plant xdot = A x + B u with feedback u = -K xhat.

    A is the growth rate (1/s, positive), L bounds the initial condition
    magnitude and is known to both ends of the link.
    """

    A: float
    B: float
    K: float
    L: float = 1.0

    def __post_init__(self):
        if not self.A > 0:
            raise ConfigurationError(f"growth rate A must be positive, got {self.A}")
        if not self.L > 0:
            raise ConfigurationError(f"initial-condition bound L must be positive, got {self.L}")

    @property
    def n(self) -> int:
        return 1

    def as_jordan(self) -> "JordanPlant":
        return JordanPlant(
            blocks=((self.A, 1),),
            B=np.array([[self.B]], dtype=float),
            K=np.array([[self.K]], dtype=float),
            L=self.L,
        )


@dataclass(frozen=True)
class JordanPlant:
    """Block-diagonal plant: one Jordan block per (eigenvalue, order) pair.

    Within a block of order p the error coordinates are chained,
    z_i' = lam*z_i + z_{i+1}, with the last coordinate purely exponential.
    All eigenvalues must be real and positive.
    """

    blocks: tuple[tuple[float, int], ...]
    B: np.ndarray
    K: np.ndarray
    L: float = 1.0

    def __post_init__(self):
        if not self.blocks:
            raise ConfigurationError("at least one Jordan block is required")
        blocks = tuple((float(lam), int(p)) for lam, p in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        for lam, p in blocks:
            if not lam > 0:
                raise ConfigurationError(f"eigenvalue must be positive, got {lam}")
            if p < 1:
                raise ConfigurationError(f"block order must be >= 1, got {p}")
        if not self.L > 0:
            raise ConfigurationError(f"initial-condition bound L must be positive, got {self.L}")
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        n = self.n
        if B.shape[0] != n:
            raise ConfigurationError(f"input map B must have {n} rows, got shape {B.shape}")
        if K.shape != (B.shape[1], n):
            raise ConfigurationError(
                f"feedback gain K must have shape {(B.shape[1], n)}, got {K.shape}"
            )
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "K", K)

    @property
    def n(self) -> int:
        return sum(p for _, p in self.blocks)

    @property
    def trace(self) -> float:
        return sum(lam * p for lam, p in self.blocks)

    def a_matrix(self) -> np.ndarray:
        n = self.n
        A = np.zeros((n, n))
        at = 0
        for lam, p in self.blocks:
            for i in range(p):
                A[at + i, at + i] = lam
                if i + 1 < p:
                    A[at + i, at + i + 1] = 1.0
            at += p
        return A

    def closed_loop_matrix(self) -> np.ndarray:
        return self.a_matrix() - self.B @ self.K

    def block_slices(self) -> list[tuple[float, int, slice]]:
        out, at = [], 0
        for lam, p in self.blocks:
            out.append((lam, p, slice(at, at + p)))
            at += p
        return out

    def coord_map(self) -> list[tuple[int, float, int, int]]:
        """Per flat coordinate: (block index, eigenvalue, order, index-in-block)."""
        out = []
        for j, (lam, p) in enumerate(self.blocks):
            for i in range(p):
                out.append((j, lam, p, i))
        return out


@dataclass(frozen=True)
class TriggerConfig:
    """Exponential trigger threshold v0*exp(-sigma*t) and the jump design knobs.

    v0 is a scalar for single-coordinate runs or a tuple of per-block tuples
    for vector runs.  rho0 sets the post-jump contraction, gamma the known
    worst-case channel delay, and b > 1 the width factor of the time
    quantization windows.  rho_ladders, when given, lists per block the
    strictly increasing per-coordinate contraction values ending at rho0.
    """

    v0: float | tuple[tuple[float, ...], ...]
    sigma: float
    rho0: float
    gamma: float
    b: float = 1.0001
    rho_ladders: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigurationError(f"decay rate sigma must be positive, got {self.sigma}")
        if not 0 < self.rho0 < 1:
            raise ConfigurationError(f"rho0 must lie in (0, 1), got {self.rho0}")
        if self.gamma < 0:
            raise ConfigurationError(f"delay bound gamma must be >= 0, got {self.gamma}")
        if not self.b > 1:
            raise ConfigurationError(f"window factor b must exceed 1, got {self.b}")
        for v in self.v0_flat():
            if not v > 0:
                raise ConfigurationError(f"trigger levels v0 must be positive, got {v}")
        if self.rho_ladders is not None:
            for ladder in self.rho_ladders:
                if not ladder or any(not 0 < r <= self.rho0 for r in ladder):
                    raise ConfigurationError(f"ladder values must lie in (0, rho0], got {ladder}")
                if any(a >= b_ for a, b_ in zip(ladder, ladder[1:])):
                    raise ConfigurationError(f"ladder must be strictly increasing, got {ladder}")
                if ladder[-1] != self.rho0:
                    raise ConfigurationError(f"ladder must end at rho0={self.rho0}, got {ladder}")

    def v0_flat(self) -> tuple[float, ...]:
        if isinstance(self.v0, (int, float)):
            return (float(self.v0),)
        return tuple(float(v) for block in self.v0 for v in block)

    def rho_flat(self, blocks: tuple[tuple[float, int], ...]) -> tuple[float, ...]:
        """Per-coordinate contraction values; defaults to rho0*i/p within a block."""
        if self.rho_ladders is not None:
            if len(self.rho_ladders) != len(blocks) or any(
                len(lad) != p for lad, (_, p) in zip(self.rho_ladders, blocks)
            ):
                raise ConfigurationError("rho_ladders shape must match the plant blocks")
            return tuple(r for lad in self.rho_ladders for r in lad)
        return tuple(self.rho0 * i / p for _, p in blocks for i in range(1, p + 1))


def default_rho_ladder(rho0: float, p: int) -> tuple[float, ...]:
    """Strictly increasing per-coordinate contractions ending at rho0."""
    return tuple(rho0 * i / p for i in range(1, p + 1))


@dataclass(frozen=True)
class SimState:
    """Closed-loop snapshot: time, true state, and controller estimate."""

    t: float
    x: np.ndarray
    xhat: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        xhat = np.atleast_1d(np.asarray(self.xhat, dtype=float))
        if x.shape != xhat.shape:
            raise ConfigurationError(f"x and xhat must agree in shape: {x.shape} vs {xhat.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xhat", xhat)

    @property
    def z(self) -> np.ndarray:
        return self.x - self.xhat


def control_input(state: SimState, plant: ScalarPlant | JordanPlant) -> np.ndarray:
    """Feedback law u = -K xhat."""
    jp = plant.as_jordan() if isinstance(plant, ScalarPlant) else plant
    return -jp.K @ state.xhat


def block_matexp(lam: float, p: int, h: float) -> np.ndarray:
    """exp(J*h) for a p x p Jordan block: exp(lam*h) times the upper
    triangular Toeplitz matrix with h^k/k! on the k-th superdiagonal."""
    M = np.zeros((p, p))
    for k in range(p):
        val = h**k / math.factorial(k)
        for i in range(p - k):
            M[i, i + k] = val
    return math.exp(lam * h) * M


def error_transition(blocks: tuple[tuple[float, int], ...], h: float) -> np.ndarray:
    """Block-diagonal exp(A*h) for the error dynamics zdot = A z."""
    return scipy.linalg.block_diag(*(block_matexp(lam, p, h) for lam, p in blocks))


def apply_error_transition(
    blocks: tuple[tuple[float, int], ...], h: float, z: np.ndarray
) -> np.ndarray:
    out = np.empty_like(z)
    at = 0
    for lam, p in blocks:
        out[at : at + p] = block_matexp(lam, p, h) @ z[at : at + p]
        at += p
    return out


def closed_loop_transition(plant: JordanPlant, h: float) -> np.ndarray:
    """exp((A - B K) h) via scaling-and-squaring Pade evaluation."""
    return scipy.linalg.expm(plant.closed_loop_matrix() * h)


def propagate(
    state: SimState,
    plant: ScalarPlant | JordanPlant,
    h: float,
    method: str = "exact",
) -> SimState:
    """Advance the closed loop by h under u = -K xhat held as a linear law.

    "exact" evaluates the flow of the augmented linear system: z moves by the
    closed-form Jordan exponential and xhat by expm((A - B K) h), which is the
    augmented-matrix solution expressed in the (xhat, z) basis.  "euler" is a
    fixed-step forward difference kept for replicating discretized runs.
    """
    if not h > 0:
        raise PreconditionError(f"step h must be positive, got {h}")
    jp = plant.as_jordan() if isinstance(plant, ScalarPlant) else plant
    if method == "exact":
        z = apply_error_transition(jp.blocks, h, state.z)
        xhat = closed_loop_transition(jp, h) @ state.xhat
        x = xhat + z
    elif method == "euler":
        A = jp.a_matrix()
        u = -jp.K @ state.xhat
        x = state.x + h * (A @ state.x + jp.B @ u)
        xhat = state.xhat + h * (A @ state.xhat + jp.B @ u)
    else:
        raise PreconditionError(f"unknown propagation method {method!r}")
    if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > OVERFLOW_LIMIT:
        raise DivergenceError(f"state overflow at t={state.t + h}")
    return SimState(state.t + h, x, xhat)


def trigger_value(cfg: TriggerConfig, coord: int, t: float) -> float:
    """Trigger threshold v0_coord * exp(-sigma t)."""
    if t < 0:
        raise PreconditionError(f"time must be >= 0, got {t}")
    return cfg.v0_flat()[coord] * math.exp(-cfg.sigma * t)


def apply_jump(state: SimState, coord: int, zbar: float) -> SimState:
    """Shift the estimate of one coordinate by the decoded error estimate.

    The true state is untouched; the new estimation error on the coordinate
    is z - zbar.
    """
    xhat = state.xhat.copy()
    xhat[coord] += zbar
    return SimState(state.t, state.x.copy(), xhat)
