"""Closed-loop event-driven simulation with trace capture and rate measurement.

The engine propagates the factored closed loop exactly between boundaries
(grid sample instants, packet deliveries, triggering events) and detects
triggers on the sample grid: a coordinate fires at the first grid instant
where its error magnitude meets the threshold and its channel is idle,
replicating a discretized run.  With refine=True the crossing instant is
additionally resolved inside the bracketing step (closed form for chain-end
coordinates, bisection for coupled ones) and events occur off-grid.

Recorded samples are left limits: a sample coinciding exactly with a
delivery shows the pre-jump state, while the event log carries post-jump
values.  Receptions are processed before trigger evaluation at the same
instant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from . import bounds as bnd
from .channel import ChannelState, DelayModel, sample_delay
from .codec import decode, encode, reconstruct_error
from .errors import ConfigurationError, DivergenceError, PreconditionError
from .model import (
    OVERFLOW_LIMIT,
    JordanPlant,
    ScalarPlant,
    TriggerConfig,
    block_matexp,
)

_FP_SLACK = 1e-9  # relative allowance for float roundoff in contract checks


@dataclass
class Event:
    """One entry of the event log: a trigger (t = t_s) or a reception (t = t_c)."""

    kind: str
    coord: int
    t: float
    t_s: float
    t_c: float
    g: int
    bits_hex: str
    sign: int
    delta: float | None = None
    q: float | None = None
    zbar: float | None = None
    post_jump: float | None = None
    jump_bound: float | None = None
    v_ts: float | None = None
    flagged: bool = False


@dataclass
class SimTrace:
    """Sampled trajectories plus the ordered event log of one run."""

    times: np.ndarray
    x: np.ndarray
    xhat: np.ndarray
    z: np.ndarray
    v: np.ndarray
    events: list[Event]
    bits_sent: np.ndarray
    trigger_counts: np.ndarray
    horizon: float
    step: float
    params: dict
    diverged: bool = False

    @property
    def n(self) -> int:
        return self.z.shape[1]

    def receptions(self) -> list[Event]:
        return [e for e in self.events if e.kind == "reception"]

    def triggers(self) -> list[Event]:
        return [e for e in self.events if e.kind == "trigger"]


@dataclass
class AnalyticBounds:
    """All closed-form quantities evaluated at one parameter set."""

    access_rate: float
    rate_necessary: float
    rate_necessary_approx: float
    rate_sufficient: float
    asymptote: float
    triggering_upper: float | None = None
    triggering_lower: float | None = None
    packet_bits_necessary: float | None = None
    min_inter_event: float | None = None
    gamma_c: float | None = None
    gamma_eq: float | None = None
    beta: float | None = None


def analytic_bounds(inp: bnd.BoundInputs) -> AnalyticBounds:
    """Evaluate every bound; single-eigenvalue extras where defined."""
    out = AnalyticBounds(
        access_rate=bnd.access_rate_necessary(inp),
        rate_necessary=bnd.transmission_rate_necessary(inp),
        rate_necessary_approx=bnd.transmission_rate_necessary_approx(inp),
        rate_sufficient=bnd.transmission_rate_sufficient(inp),
        asymptote=bnd.rate_asymptote(inp),
    )
    try:
        A = inp.A
    except PreconditionError:
        return out
    out.triggering_upper = bnd.triggering_rate_upper(inp)
    out.triggering_lower = bnd.triggering_rate_lower(inp)
    out.packet_bits_necessary = bnd.packet_bits_necessary(inp)
    out.min_inter_event = bnd.min_inter_event_time(inp)
    out.gamma_c = bnd.critical_delay(inp)
    out.gamma_eq = bnd.equilibrium_delay(A)
    out.beta = bnd.beta(inp)
    return out


@dataclass
class RateReport:
    """Empirical rates of one run next to the analytic bounds."""

    horizon: float
    total_bits: int
    trigger_count: int
    rate_empirical: float
    trigger_rate_empirical: float
    per_coord_bits: tuple[int, ...]
    per_coord_rate: tuple[float, ...]
    per_coord_triggers: tuple[int, ...]
    bounds: AnalyticBounds


class _Engine:
    """Single deterministic run over a Jordan-form plant."""

    def __init__(
        self,
        plant: JordanPlant,
        cfg: TriggerConfig,
        delay_models: Sequence[DelayModel | None],
        horizon: float,
        step: float,
        x0: np.ndarray,
        xhat0: np.ndarray,
        refine: bool,
        g: int | Sequence[int] | None,
        nu: float,
    ):
        if not step > 0:
            raise PreconditionError(f"step must be positive, got {step}")
        if not horizon > 0:
            raise PreconditionError(f"horizon must be positive, got {horizon}")
        self.plant = plant
        self.cfg = cfg
        self.n = plant.n
        if len(delay_models) != self.n:
            raise ConfigurationError(
                f"need one delay model per coordinate ({self.n}), got {len(delay_models)}"
            )
        self.delay_models = list(delay_models)
        self.h = step
        steps = horizon / step
        self.S = int(round(steps)) if abs(steps - round(steps)) < 1e-9 else int(steps)
        self.t_end = self.S * step
        self.refine = refine
        self.nu = nu
        self.sigma = cfg.sigma

        self.v0s = np.asarray(cfg.v0_flat(), dtype=float)
        if self.v0s.size == 1 and self.n > 1:
            self.v0s = np.full(self.n, self.v0s[0])
        if self.v0s.size != self.n:
            raise ConfigurationError(
                f"need one trigger level per coordinate ({self.n}), got {self.v0s.size}"
            )
        self.rhos = np.asarray(cfg.rho_flat(plant.blocks), dtype=float)
        self.block_slices = plant.block_slices()
        self.coord_map = plant.coord_map()
        self.lams = np.array([lam for _, lam, _, _ in self.coord_map])
        self._coord_slice = []
        for _, _, sl in self.block_slices:
            self._coord_slice.extend([sl] * (sl.stop - sl.start))
        self.enabled = np.array([m is not None for m in self.delay_models])

        if g is None:
            base = bnd.BoundInputs(
                blocks=plant.blocks, sigma=cfg.sigma, rho0=cfg.rho0,
                gamma=cfg.gamma, b=cfg.b, nu=max(1.0, nu),
            )
            self.gs = [
                bnd.packet_size_sufficient(bnd.per_coordinate_inputs(base, lam, rho))
                for lam, rho in zip(self.lams, self.rhos)
            ]
        elif isinstance(g, (int, np.integer)):
            self.gs = [int(g)] * self.n
        else:
            self.gs = [int(v) for v in g]
            if len(self.gs) != self.n:
                raise ConfigurationError(f"need {self.n} packet sizes, got {len(self.gs)}")

        self.x0 = np.asarray(x0, dtype=float)
        self.xhat0 = np.asarray(xhat0, dtype=float)
        if self.x0.shape != (self.n,) or self.xhat0.shape != (self.n,):
            raise ConfigurationError(f"initial conditions must have shape ({self.n},)")

        self.acl = plant.closed_loop_matrix()
        self._phi_cache: dict[float, np.ndarray] = {}
        self._zexp_cache: dict[float, list[np.ndarray]] = {}

        # run state, shared by the exact and euler paths
        self.events: list[Event] = []
        self.bits_sent = np.zeros(self.n, dtype=np.int64)
        self.trigger_counts = np.zeros(self.n, dtype=np.int64)
        self.channel = ChannelState()
        self._k = [0] * self.n
        self._fired_at = [-math.inf] * self.n

    # -- propagation helpers --------------------------------------------------

    def _phi(self, dt: float) -> np.ndarray:
        phi = self._phi_cache.get(dt)
        if phi is None:
            phi = scipy.linalg.expm(self.acl * dt)
            if len(self._phi_cache) < 4096:
                self._phi_cache[dt] = phi
        return phi

    def _z_step(self, z: np.ndarray, dt: float) -> np.ndarray:
        mats = self._zexp_cache.get(dt)
        if mats is None:
            mats = [block_matexp(lam, p, dt) for lam, p, _ in self.block_slices]
            if len(self._zexp_cache) < 4096:
                self._zexp_cache[dt] = mats
        out = np.empty_like(z)
        for (_, _, sl), M in zip(self.block_slices, mats):
            out[sl] = M @ z[sl]
        return out

    def _advance(self, z: np.ndarray, xhat: np.ndarray, dt: float):
        if dt == 0.0:
            return z, xhat
        return self._z_step(z, dt), self._phi(dt) @ xhat

    def _z_at_offsets(self, z: np.ndarray, offsets: np.ndarray) -> np.ndarray:
        """Exact error trajectory at current time + offsets, shape (n, m)."""
        out = np.empty((self.n, offsets.size))
        for lam, p, sl in self.block_slices:
            grow = np.exp(lam * offsets)
            zb = z[sl]
            for i in range(p):
                acc = np.full(offsets.size, zb[i])
                powh = np.ones(offsets.size)
                fact = 1.0
                for k in range(1, p - i):
                    powh = powh * offsets
                    fact *= k
                    acc = acc + zb[i + k] * powh / fact
                out[sl.start + i] = acc * grow
        return out

    def _v_at(self, coord: int, t: float) -> float:
        return self.v0s[coord] * math.exp(-self.sigma * t)

    # -- main loop (exact propagation) ----------------------------------------

    def run(self) -> SimTrace:
        n, h, S = self.n, self.h, self.S
        times = np.arange(S + 1) * h
        V = self.v0s[None, :] * np.exp(-self.sigma * times)[:, None]
        X = np.full((S + 1, n), np.nan)
        XH = np.full((S + 1, n), np.nan)
        Z = np.full((S + 1, n), np.nan)
        self._times, self._X, self._XH, self._Z, self._V = times, X, XH, Z, V

        t = 0.0
        z = self.x0 - self.xhat0
        xhat = self.xhat0.copy()
        X[0], XH[0], Z[0] = self.x0, self.xhat0, z
        next_idx = 1
        self._check_overflow(self.x0, 0.0, next_idx)

        while True:
            nd = self.channel.next_delivery()
            t_rx = nd[0] if nd is not None else math.inf
            if t_rx <= t:
                z, xhat = self._process_receptions(t, z, xhat)
                self._instant_eval(t, z, next_idx)
                continue
            chunk_end = min(t_rx, self.t_end)
            is_rx = t_rx <= self.t_end

            idx_hi = next_idx - 1 + int(
                np.searchsorted(times[next_idx:], chunk_end + 1e-15, side="right")
            )
            if idx_hi >= next_idx:
                offsets = times[next_idx : idx_hi + 1] - t
                zmat = self._z_at_offsets(z, offsets)
                idle = np.array([self.channel.admit(c) for c in range(n)]) & self.enabled
                eligible = (np.abs(zmat) >= V[next_idx : idx_hi + 1].T) & idle[:, None]
                hits = eligible.any(axis=0)
                if hits.any():
                    jcol = int(np.argmax(hits))
                    gi = next_idx + jcol
                    if self.refine:
                        t, z, xhat, next_idx = self._refine_fire(
                            t, z, xhat, next_idx, gi, jcol, zmat, eligible[:, jcol]
                        )
                    else:
                        xhat = self._commit(zmat[:, : jcol + 1], t, xhat, next_idx, gi)
                        z = zmat[:, jcol].copy()
                        t = times[gi]
                        next_idx = gi + 1
                        for c in np.flatnonzero(eligible[:, jcol]):
                            self._fire(int(c), t, z)
                    continue
                xhat = self._commit(zmat, t, xhat, next_idx, idx_hi)
                z = zmat[:, -1].copy()
                t = times[idx_hi]
                next_idx = idx_hi + 1

            if chunk_end > t:
                z, xhat = self._advance(z, xhat, chunk_end - t)
                t = chunk_end
                self._check_overflow(xhat + z, t, next_idx)
            if is_rx:
                z, xhat = self._process_receptions(t, z, xhat)
                self._instant_eval(t, z, next_idx)
                continue
            break

        return SimTrace(
            times, X, XH, Z, V, self.events, self.bits_sent, self.trigger_counts,
            horizon=self.t_end, step=h, params=self._params("exact"),
        )

    def _params(self, integrator: str) -> dict:
        return dict(
            plant=self.plant,
            trigger=self.cfg,
            gamma=self.cfg.gamma,
            b=self.cfg.b,
            nu=self.nu,
            g=tuple(self.gs),
            refine=self.refine,
            integrator=integrator,
            x0=tuple(self.x0),
            xhat0=tuple(self.xhat0),
            delays=tuple(
                m.describe() if m is not None else "disabled" for m in self.delay_models
            ),
        )

    # -- boundary processing ----------------------------------------------------

    def _commit(self, zcols: np.ndarray, t_from: float, xhat: np.ndarray,
                i0: int, i1: int) -> np.ndarray:
        """Fill samples i0..i1 from precomputed error columns; returns xhat at i1."""
        times = self._times
        if self.n == 1:
            dts = times[i0 : i1 + 1] - t_from
            xh = xhat[0] * np.exp(self.acl[0, 0] * dts)
            self._XH[i0 : i1 + 1, 0] = xh
            xhat_out = np.array([xh[-1]])
        else:
            cur = xhat
            prev_t = t_from
            for i in range(i0, i1 + 1):
                cur = self._phi(times[i] - prev_t) @ cur
                prev_t = times[i]
                self._XH[i] = cur
            xhat_out = cur.copy()
        self._Z[i0 : i1 + 1] = zcols.T
        self._X[i0 : i1 + 1] = self._XH[i0 : i1 + 1] + zcols.T
        self._check_overflow(self._X[i1], times[i1], i1 + 1)
        return xhat_out

    def _check_overflow(self, x: np.ndarray, t: float, next_idx: int) -> None:
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > OVERFLOW_LIMIT:
            raise DivergenceError(
                f"state overflow at t={t:.6g}", trace=self._partial_trace(next_idx)
            )

    def _partial_trace(self, next_idx: int) -> SimTrace:
        k = next_idx
        return SimTrace(
            self._times[:k], self._X[:k], self._XH[:k], self._Z[:k], self._V[:k],
            self.events, self.bits_sent, self.trigger_counts,
            horizon=self.t_end, step=self.h, params=self._params("exact"),
            diverged=True,
        )

    def _fire(self, c: int, t_s: float, z: np.ndarray) -> None:
        if self._fired_at[c] == t_s:
            return
        self._fired_at[c] = t_s
        sign = 1 if z[c] > 0 else -1
        g = self.gs[c]
        packet = encode(t_s, sign, g, self.cfg.b, self.cfg.gamma, coord=c)
        delta = sample_delay(self.delay_models[c], self._k[c])
        if delta > self.cfg.gamma + 1e-12:
            raise ConfigurationError(
                f"delay {delta} exceeds the configured bound gamma={self.cfg.gamma}"
            )
        self._k[c] += 1
        t_c = t_s + delta
        self.channel.send(c, packet, t_c)
        self.bits_sent[c] += g
        self.trigger_counts[c] += 1
        self.events.append(
            Event(
                kind="trigger", coord=c, t=t_s, t_s=t_s, t_c=t_c, g=g,
                bits_hex=packet.bits_hex(), sign=sign, delta=delta,
                v_ts=self._v_at(c, t_s),
            )
        )

    def _deliver(self, c: int, t_eff: float, z: np.ndarray, xhat: np.ndarray) -> None:
        """Decode, reconstruct and apply the jump for coordinate c at t_eff."""
        packet = self.channel.deliver(c)
        gamma, b = self.cfg.gamma, self.cfg.b
        sign, q = decode(packet, t_eff, b, gamma)
        zbar = reconstruct_error(sign, q, t_eff, self.v0s[c], self.sigma, self.lams[c])
        z[c] -= zbar
        xhat[c] += zbar
        v_ts = self._v_at(c, packet.t_s)
        jump_bound = self.rhos[c] * math.exp(-self.sigma * gamma) * v_ts + (
            self.cfg.rho0 - self.rhos[c]
        ) * self._v_at(c, t_eff)
        self.events.append(
            Event(
                kind="reception", coord=c, t=t_eff, t_s=packet.t_s, t_c=t_eff,
                g=packet.g, bits_hex=packet.bits_hex(), sign=sign,
                delta=t_eff - packet.t_s, q=q, zbar=zbar, post_jump=abs(z[c]),
                jump_bound=jump_bound, v_ts=v_ts,
                flagged=not (t_eff - gamma - 1e-12 <= q <= t_eff + 1e-12),
            )
        )

    def _process_receptions(self, t: float, z: np.ndarray, xhat: np.ndarray):
        while True:
            nd = self.channel.next_delivery()
            if nd is None or nd[0] > t:
                return z, xhat
            self._deliver(nd[1], nd[0], z, xhat)

    def _instant_eval(self, t: float, z: np.ndarray, next_idx: int) -> None:
        """Trigger re-evaluation right after receptions at the same instant.

        Grid runs only re-evaluate when the instant is a grid point; refined
        runs fire at any boundary where a coordinate sits at or above its
        threshold.
        """
        at_grid = next_idx >= 1 and self._times[next_idx - 1] == t
        if not (self.refine or at_grid):
            return
        for c in range(self.n):
            if not self.enabled[c] or not self.channel.admit(c):
                continue
            if abs(z[c]) >= self._v_at(c, t):
                self._fire(c, t, z)

    def _refine_fire(self, t, z, xhat, next_idx, gi, jcol, zmat, elig_col):
        """Resolve exact crossings inside the detection step, fire the earliest."""
        times = self._times
        if jcol > 0:
            xhat = self._commit(zmat[:, :jcol], t, xhat, next_idx, gi - 1)
            t_a = times[gi - 1]
            z_a = zmat[:, jcol - 1].copy()
            next_idx = gi
        else:
            t_a, z_a = t, z
        hi = times[gi] - t_a
        crossings = {
            int(c): self._crossing(int(c), t_a, z_a, hi) for c in np.flatnonzero(elig_col)
        }
        t_star = min(crossings.values())
        z_new, xhat_new = self._advance(z_a, xhat, t_star - t_a)
        for c, s in crossings.items():
            if s == t_star:
                self._fire(c, t_star, z_new)
        self._check_overflow(xhat_new + z_new, t_star, next_idx)
        return t_star, z_new, xhat_new, next_idx

    def _crossing(self, c: int, t_a: float, z_a: np.ndarray, hi: float) -> float:
        """First s in (0, hi] with |z_c(t_a+s)| = v_c(t_a+s), as absolute time."""
        _, lam, p, i_in = self.coord_map[c]
        v_a = self._v_at(c, t_a)
        if abs(z_a[c]) >= v_a:
            return t_a
        if i_in == p - 1:
            # chain-end coordinate grows purely exponentially against the threshold
            s = math.log(v_a / abs(z_a[c])) / (lam + self.sigma)
            return t_a + min(s, hi)
        zb = z_a[self._coord_slice[c]]
        lo_s, hi_s = 0.0, hi
        for _ in range(80):
            mid = 0.5 * (lo_s + hi_s)
            zc = (block_matexp(lam, p, mid) @ zb)[i_in]
            if abs(zc) - v_a * math.exp(-self.sigma * mid) < 0.0:
                lo_s = mid
            else:
                hi_s = mid
        return t_a + hi_s

    # -- fixed-step replica -----------------------------------------------------

    def run_euler(self) -> SimTrace:
        """Forward-difference run for replicating discretized executions.

        Deliveries land on the first tick after the send whose time does not
        precede the scheduled arrival rounded down to the grid, so effective
        delays stay within the bound whenever the step is below gamma.
        Samples record the post-update state at each tick.
        """
        n, h, S = self.n, self.h, self.S
        times = np.arange(S + 1) * h
        V = self.v0s[None, :] * np.exp(-self.sigma * times)[:, None]
        X = np.empty((S + 1, n))
        XH = np.empty((S + 1, n))
        A = self.plant.a_matrix()
        B, K = self.plant.B, self.plant.K
        x, xhat = self.x0.copy(), self.xhat0.copy()
        X[0], XH[0] = x, xhat
        scheduled: dict[int, int] = {}

        for i in range(1, S + 1):
            u = -K @ xhat
            x = x + h * (A @ x + B @ u)
            xhat = xhat + h * (A @ xhat + B @ u)
            t = times[i]
            z = x - xhat
            for c in [c for c, due in scheduled.items() if due <= i]:
                del scheduled[c]
                packet, _ = self.channel.in_flight[c]
                t_eff = min(t, packet.t_s + self.cfg.gamma)
                self._deliver(c, t_eff, z, xhat)
            for c in range(n):
                if not self.enabled[c] or not self.channel.admit(c):
                    continue
                if abs(z[c]) >= V[i, c]:
                    self._fire(c, t, z)
                    _, t_c = self.channel.in_flight[c]
                    scheduled[c] = max(i + 1, int(math.floor(t_c / h + 1e-12)))
            X[i], XH[i] = x, xhat
            if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > OVERFLOW_LIMIT:
                raise DivergenceError(f"state overflow at t={t:.6g}")

        return SimTrace(
            times, X, XH, X - XH, V, self.events, self.bits_sent, self.trigger_counts,
            horizon=self.t_end, step=h, params=self._params("euler"),
        )


def _delay_list(delay_models, n):
    if delay_models is None:
        raise ConfigurationError("a delay model is required")
    if not isinstance(delay_models, (list, tuple)):
        return [delay_models] * n
    return list(delay_models)


def run_scalar(
    plant: ScalarPlant,
    cfg: TriggerConfig,
    delay_model: DelayModel,
    horizon: float,
    step: float,
    *,
    x0: float,
    xhat0: float,
    refine: bool = False,
    g: int | None = None,
    nu: float = 2.0,
    integrator: str = "exact",
) -> SimTrace:
    """Closed-loop run of a scalar plant; requires |z(0)| < v0."""
    v0 = cfg.v0_flat()[0]
    if not abs(x0 - xhat0) < v0:
        raise PreconditionError(
            f"initial error |z(0)|={abs(x0 - xhat0)} must be below v0={v0}"
        )
    eng = _Engine(
        plant.as_jordan(), cfg, [delay_model], horizon, step,
        np.array([float(x0)]), np.array([float(xhat0)]), refine, g, nu,
    )
    if integrator == "euler":
        return eng.run_euler()
    if integrator != "exact":
        raise PreconditionError(f"unknown integrator {integrator!r}")
    return eng.run()


def run_vector(
    plant: JordanPlant,
    cfg: TriggerConfig,
    delay_models: Sequence[DelayModel | None] | DelayModel,
    horizon: float,
    step: float,
    *,
    x0: Sequence[float],
    xhat0: Sequence[float],
    refine: bool = False,
    g: int | Sequence[int] | None = None,
    nu: float = 2.0,
    integrator: str = "exact",
) -> SimTrace:
    """Closed-loop run of a Jordan-form plant over per-coordinate channels.

    Trigger levels must satisfy the coupling cascade bound within each block
    (checked up front; violations refuse to run).  A None delay model
    disables that coordinate's channel entirely.
    """
    models = _delay_list(delay_models, plant.n)
    x0 = np.asarray(x0, dtype=float)
    xhat0 = np.asarray(xhat0, dtype=float)
    validate_cascade(plant, cfg)
    v0s = np.asarray(cfg.v0_flat(), dtype=float)
    if v0s.size == 1:
        v0s = np.full(plant.n, v0s[0])
    z0 = np.abs(x0 - xhat0)
    if np.any(z0 > v0s):
        raise PreconditionError(f"initial errors {z0} must not exceed trigger levels {v0s}")
    eng = _Engine(plant, cfg, models, horizon, step, x0, xhat0, refine, g, nu)
    if integrator == "euler":
        return eng.run_euler()
    if integrator != "exact":
        raise PreconditionError(f"unknown integrator {integrator!r}")
    return eng.run()


def validate_cascade(plant: JordanPlant, cfg: TriggerConfig) -> None:
    """Refuse trigger levels whose chained coordinates exceed the coupling caps."""
    v0s = list(cfg.v0_flat())
    if len(v0s) == 1:
        v0s = v0s * plant.n
    rhos = list(cfg.rho_flat(plant.blocks))
    at = 0
    for lam, p in plant.blocks:
        v_blk = tuple(v0s[at : at + p])
        r_blk = tuple(rhos[at : at + p])
        caps = bnd.v0_cascade_bound(
            (lam, p), v0=v_blk, rho=r_blk, sigma=cfg.sigma, rho0=cfg.rho0, gamma=cfg.gamma
        )
        for i, cap in enumerate(caps.upper, start=1):
            if v_blk[i] > cap * (1.0 + 1e-12):
                raise ConfigurationError(
                    f"trigger level v0={v_blk[i]} for chained coordinate {at + i} "
                    f"exceeds its coupling cap {cap:.6g}"
                )
        at += p


def trace_inputs(trace: SimTrace) -> bnd.BoundInputs:
    """Bound inputs matching a recorded run."""
    plant: JordanPlant = trace.params["plant"]
    cfg: TriggerConfig = trace.params["trigger"]
    return bnd.BoundInputs(
        blocks=plant.blocks, sigma=cfg.sigma, rho0=cfg.rho0, gamma=cfg.gamma,
        b=cfg.b, nu=max(1.0, trace.params.get("nu", 1.0)),
        rho_ladders=cfg.rho_ladders,
    )


def measure_rates(trace: SimTrace) -> RateReport:
    """Empirical sent-bit and triggering rates over the run horizon."""
    T = trace.horizon
    if not T > 0:
        raise PreconditionError("rate measurement needs a positive horizon")
    bits = trace.bits_sent
    trig = trace.trigger_counts
    return RateReport(
        horizon=T,
        total_bits=int(bits.sum()),
        trigger_count=int(trig.sum()),
        rate_empirical=float(bits.sum()) / T,
        trigger_rate_empirical=float(trig.sum()) / T,
        per_coord_bits=tuple(int(b) for b in bits),
        per_coord_rate=tuple(float(b) / T for b in bits),
        per_coord_triggers=tuple(int(c) for c in trig),
        bounds=analytic_bounds(trace_inputs(trace)),
    )


@dataclass
class Validation:
    """Outcome of the runtime-invariant checks on a trace."""

    ok: bool
    violations: list[str]
    checks: dict[str, bool]


def validate_trace(trace: SimTrace) -> Validation:
    """Check delays, post-jump contracts, envelopes, spacing, and rate caps.

    Grid-mode runs get the documented discretization allowance: detection and
    delivery each lag by at most one step, inflating the pre-jump error by at
    most e^{2(lam+sigma)h}.
    """
    plant: JordanPlant = trace.params["plant"]
    cfg: TriggerConfig = trace.params["trigger"]
    refine = trace.params.get("refine", False)
    gamma, sigma, h = cfg.gamma, cfg.sigma, trace.step
    rhos = cfg.rho_flat(plant.blocks)
    v0s = list(cfg.v0_flat())
    if len(v0s) == 1:
        v0s = v0s * plant.n
    coord_map = plant.coord_map()
    violations: list[str] = []
    checks: dict[str, bool] = {}

    ok = True
    for e in trace.receptions():
        if not -1e-12 <= e.delta <= gamma + 1e-12:
            ok = False
            violations.append(f"delay {e.delta} outside [0, {gamma}] at t={e.t}")
    checks["delays_in_bound"] = ok

    ok = True
    for e in trace.receptions():
        lam = coord_map[e.coord][1]
        slack = e.jump_bound * _FP_SLACK + 1e-15
        if not refine:
            slack += math.expm1(2.0 * (lam + sigma) * h) * e.v_ts * math.exp(lam * gamma)
        if e.post_jump > e.jump_bound + slack:
            ok = False
            violations.append(
                f"post-jump error {e.post_jump} exceeds bound {e.jump_bound} "
                f"(coord {e.coord}, t={e.t})"
            )
    checks["post_jump_contract"] = ok

    ok = True
    for c in range(trace.n):
        lam = coord_map[c][1]
        env = v0s[c] * ((cfg.rho0 - rhos[c]) + math.exp((lam + sigma) * gamma)) * np.exp(
            -sigma * trace.times
        )
        zc = np.abs(trace.z[:, c])
        zmax = float(np.nanmax(zc)) if zc.size else 0.0
        slack = 2.0 * h * (lam + sigma) * zmax + env * _FP_SLACK
        bad = zc > env + slack
        if bad.any():
            ok = False
            i = int(np.argmax(bad))
            violations.append(
                f"envelope exceeded on coord {c} at t={trace.times[i]:.6g}: "
                f"|z|={zc[i]:.6g} > {env[i]:.6g}"
            )
    checks["decay_envelope"] = ok

    ok = True
    dmins = [
        _min_spacing(coord_map[c][1], sigma, gamma, cfg.rho0, rhos[c])
        for c in range(trace.n)
    ]
    for c in range(trace.n):
        ts = [e.t_s for e in trace.triggers() if e.coord == c]
        for a, b_ in zip(ts, ts[1:]):
            if b_ - a < dmins[c] - 2.0 * h - 1e-12:
                ok = False
                violations.append(
                    f"inter-event time {b_ - a:.6g} below {dmins[c]:.6g} - 2h on coord {c}"
                )
    checks["no_zeno"] = ok

    ok = True
    T = trace.horizon
    for c in range(trace.n):
        if dmins[c] <= 0.0:
            continue
        lam = coord_map[c][1]
        upper = 1.0 / dmins[c]
        r_emp = trace.trigger_counts[c] / T
        if r_emp > upper * (1.0 + 2.0 * (lam + sigma) * h) + 1.0 / T + 1e-12:
            ok = False
            violations.append(f"trigger rate {r_emp:.6g} above cap {upper:.6g} on coord {c}")
    checks["trigger_rate_cap"] = ok

    return Validation(ok=not violations, violations=violations, checks=checks)


def _min_spacing(lam, sigma, gamma, rho0, rho_i):
    """Guaranteed spacing of triggering events for one coordinate.

    Chain-end coordinates regrow purely exponentially from the post-jump
    contraction, giving -ln(rho0 e^{-sigma gamma})/(lam+sigma).  A coupled
    coordinate is additionally driven by the coordinate below it, whose
    envelope (absorbed via the ladder slack rho0 - rho_i and the cascade
    caps) shortens the guaranteed spacing to
    ln((1+c)/(rho_i e^{-sigma gamma} + (rho0-rho_i) + c))/(lam+sigma) with
    c = (rho0-rho_i)/(e^{(lam+sigma) gamma} - 1).
    """
    if rho_i >= rho0:
        return (sigma * gamma - math.log(rho0)) / (lam + sigma)
    if gamma == 0.0:
        return 0.0  # the zero-delay cascade cap is infinite: no spacing floor
    c = (rho0 - rho_i) / math.expm1((lam + sigma) * gamma)
    u = (1.0 + c) / (rho_i * math.exp(-sigma * gamma) + (rho0 - rho_i) + c)
    return math.log(u) / (lam + sigma)


@dataclass
class SweepRow:
    """One delay-bound setting of an empirical sweep."""

    gamma: float
    g: int | None = None
    rate_empirical: float | None = None
    trigger_rate_empirical: float | None = None
    bounds: AnalyticBounds | None = None
    x0_norm: float | None = None
    xT_norm: float | None = None
    invariants_ok: bool | None = None
    error: str | None = None


def sweep_gamma(
    plant: ScalarPlant | JordanPlant,
    cfg: TriggerConfig,
    gamma_grid: Sequence[float],
    horizon: float,
    step: float,
    *,
    delay_factory: Callable[[float, int, int], DelayModel],
    x0,
    xhat0,
    refine: bool = False,
    nu: float = 2.0,
) -> list[SweepRow]:
    """Re-run the closed loop across delay bounds, one row per grid value.

    The packet size is recomputed for every gamma.  delay_factory(gamma, row,
    coord) builds the per-coordinate delay model.  Rows that diverge record
    the error and the sweep continues.  Rows are deterministic and mutually
    independent, so execution order never affects the results.
    """
    jp = plant.as_jordan() if isinstance(plant, ScalarPlant) else plant
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    xhat0 = np.atleast_1d(np.asarray(xhat0, dtype=float))
    rows: list[SweepRow] = []
    for r, gamma in enumerate(gamma_grid):
        if not gamma > 0:
            raise ConfigurationError(f"sweep grid values must be positive, got {gamma}")
        cfg_g = replace(cfg, gamma=float(gamma))
        models = [delay_factory(float(gamma), r, c) for c in range(jp.n)]
        try:
            trace = run_vector(
                jp, cfg_g, models, horizon, step, x0=x0, xhat0=xhat0, refine=refine, nu=nu
            )
            report = measure_rates(trace)
            rows.append(
                SweepRow(
                    gamma=float(gamma),
                    g=max(trace.params["g"]),
                    rate_empirical=report.rate_empirical,
                    trigger_rate_empirical=report.trigger_rate_empirical,
                    bounds=report.bounds,
                    x0_norm=float(np.linalg.norm(trace.x[0])),
                    xT_norm=float(np.linalg.norm(trace.x[-1])),
                    invariants_ok=validate_trace(trace).ok,
                )
            )
        except DivergenceError as err:
            rows.append(SweepRow(gamma=float(gamma), error=str(err)))
    return rows


@dataclass
class PhaseCurve:
    """Analytic rate curves over a delay grid, with the transition markers."""

    gammas: np.ndarray
    necessary: np.ndarray
    necessary_approx: np.ndarray
    sufficient: np.ndarray
    gamma_c: float
    gamma_eq: float
    asymptote: float
    access_rate: float
    necessary_sup_sigma: np.ndarray | None = None
    necessary_exceeds_sufficient: int = 0


def phase_curves(
    inp: bnd.BoundInputs,
    gamma_grid: Sequence[float],
    sigma_grid: Sequence[float] | None = None,
) -> PhaseCurve:
    """Necessary, approximate-necessary, and sufficient rates per grid delay.

    With sigma_grid, additionally reports the supremum over those decay rates
    of the necessary rate.  Grid points where the necessary rate exceeds the
    sufficient one are counted, not asserted.
    """
    gammas = np.asarray(list(gamma_grid), dtype=float)
    nec = np.empty_like(gammas)
    app = np.empty_like(gammas)
    suf = np.empty_like(gammas)
    sup = np.empty_like(gammas) if sigma_grid is not None else None
    for i, g in enumerate(gammas):
        at = replace(inp, gamma=float(g))
        nec[i] = bnd.transmission_rate_necessary(at)
        app[i] = bnd.transmission_rate_necessary_approx(at)
        suf[i] = bnd.transmission_rate_sufficient(at)
        if sup is not None:
            sup[i] = max(
                bnd.transmission_rate_necessary(replace(at, sigma=float(s)))
                for s in sigma_grid
            )
    return PhaseCurve(
        gammas=gammas,
        necessary=nec,
        necessary_approx=app,
        sufficient=suf,
        gamma_c=bnd.critical_delay(inp),
        gamma_eq=bnd.equilibrium_delay(inp.A),
        asymptote=bnd.rate_asymptote(inp),
        access_rate=bnd.access_rate_necessary(inp),
        necessary_sup_sigma=sup,
        necessary_exceeds_sufficient=int(np.sum(nec > suf * (1.0 + 1e-12))),
    )
