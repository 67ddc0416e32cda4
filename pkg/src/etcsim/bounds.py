"""Closed-form rate bounds, bit bounds, critical delays and design checks.

Conventions: log2 for bit counts and rates, natural log elsewhere.  Clamped
max{0, .} terms return exactly 0.0, never a negative epsilon, so phase
transition tests can compare against zero.  Expressions are arranged around
expm1/log1p so they stay finite and accurate for very small and very large
delay bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import PreconditionError
from .model import default_rho_ladder

LN2 = math.log(2.0)


@dataclass(frozen=True)
class BoundInputs:
    """Parameter bundle shared by the analytic bounds.

    blocks lists (eigenvalue, order) pairs; a scalar system is a single
    (A, 1) block.  nu >= 1 is the quantization precision parameter of the
    necessity results (nu >= 2 where the design-window check is used).
    """

    blocks: tuple[tuple[float, int], ...]
    sigma: float
    rho0: float
    gamma: float
    b: float = 1.0001
    nu: float = 1.0
    rho_ladders: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        blocks = tuple((float(lam), int(p)) for lam, p in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if not blocks or any(lam <= 0 or p < 1 for lam, p in blocks):
            raise PreconditionError(f"blocks must be (lam > 0, p >= 1) pairs, got {blocks}")
        if not self.sigma > 0:
            raise PreconditionError(f"sigma must be positive, got {self.sigma}")
        if not 0 < self.rho0 < 1:
            raise PreconditionError(f"rho0 must lie in (0, 1), got {self.rho0}")
        if self.gamma < 0:
            raise PreconditionError(f"gamma must be >= 0, got {self.gamma}")
        if not self.b > 1:
            raise PreconditionError(f"b must exceed 1, got {self.b}")
        if not self.nu >= 1:
            raise PreconditionError(f"nu must be >= 1, got {self.nu}")

    @classmethod
    def scalar(cls, A, sigma, rho0, gamma=0.0, b=1.0001, nu=1.0) -> "BoundInputs":
        return cls(blocks=((A, 1),), sigma=sigma, rho0=rho0, gamma=gamma, b=b, nu=nu)

    @property
    def n(self) -> int:
        return sum(p for _, p in self.blocks)

    @property
    def trace(self) -> float:
        return sum(lam * p for lam, p in self.blocks)

    @property
    def A(self) -> float:
        """The growth rate, defined when all blocks share one eigenvalue."""
        lams = {lam for lam, _ in self.blocks}
        if len(lams) != 1:
            raise PreconditionError("scalar growth rate undefined for mixed eigenvalues")
        return lams.pop()

    def rho_flat(self) -> tuple[tuple[float, tuple[float, ...]], ...]:
        """Per block: (eigenvalue, per-coordinate contraction ladder)."""
        if self.rho_ladders is not None:
            return tuple((lam, lad) for (lam, _), lad in zip(self.blocks, self.rho_ladders))
        return tuple((lam, default_rho_ladder(self.rho0, p)) for lam, p in self.blocks)


def _ln_em1(u: float) -> float:
    """ln(e^u - 1), overflow-free and accurate for small u."""
    if u <= 0:
        raise PreconditionError(f"needs a positive exponent, got {u}")
    return u + math.log(-math.expm1(-u))


def _ln_contraction(inp: BoundInputs) -> float:
    """-ln(rho0 * exp(-sigma*gamma)), always positive."""
    return inp.sigma * inp.gamma - math.log(inp.rho0)


def access_rate_necessary(inp: BoundInputs) -> float:
    """Bits/s the controller must receive: (Tr(A) + n*sigma)/ln 2."""
    return (inp.trace + inp.n * inp.sigma) / LN2


def bits_lower_bound(t: float, L: float, z0_norm: float, inp: BoundInputs, kind: str) -> float:
    """Minimum bits over [0, t] for exponential-rate estimation or stabilization."""
    if t < 0:
        raise PreconditionError(f"horizon must be >= 0, got {t}")
    base = t * (inp.trace + inp.n * inp.sigma) / LN2
    if kind == "stabilization":
        return base
    if kind == "estimation":
        if z0_norm == 0:
            raise PreconditionError("estimation bound undefined for zero initial error")
        if not 0 < z0_norm <= L:
            raise PreconditionError(f"need 0 < |z(0)| <= L, got {z0_norm} vs L={L}")
        return base + inp.n * math.log2(L / z0_norm)
    raise PreconditionError(f"kind must be 'estimation' or 'stabilization', got {kind!r}")


def _packet_bits(lam: float, inp: BoundInputs) -> float:
    """max{0, log2((e^{lam*gamma} - 1)/(rho0 e^{-sigma*gamma}))} for one eigenvalue."""
    if inp.gamma == 0:
        return 0.0
    val = (_ln_em1(lam * inp.gamma) + _ln_contraction(inp)) / LN2
    return max(0.0, val)


def packet_bits_necessary(inp: BoundInputs) -> float:
    """Minimum bits per triggering event (single-eigenvalue systems)."""
    return _packet_bits(inp.A, inp)


def _trigger_upper(lam: float, inp: BoundInputs) -> float:
    return (lam + inp.sigma) / _ln_contraction(inp)


def _trigger_lower(lam: float, inp: BoundInputs) -> float:
    # ln(2 + e^{sigma*gamma}/rho0) evaluated overflow-free.
    u = inp.sigma * inp.gamma
    ln_term = u + math.log(2 * math.exp(-u) + 1.0 / inp.rho0)
    return (lam + inp.sigma) / (math.log(inp.nu) + ln_term)


def triggering_rate_upper(inp: BoundInputs) -> float:
    """Worst-case events/s of the triggering rule."""
    return _trigger_upper(inp.A, inp)


def triggering_rate_lower(inp: BoundInputs) -> float:
    """Events/s forced by some delay realization under nu-precision."""
    return _trigger_lower(inp.A, inp)


def min_inter_event_time(inp: BoundInputs) -> float:
    """Uniform lower bound on the spacing of triggering events (seconds)."""
    return _ln_contraction(inp) / (inp.A + inp.sigma)


def transmission_rate_necessary(inp: BoundInputs) -> float:
    """Bits/s forced by some delay realization; sums blocks with multiplicity."""
    return sum(p * _trigger_lower(lam, inp) * _packet_bits(lam, inp) for lam, p in inp.blocks)


def transmission_rate_necessary_approx(inp: BoundInputs) -> float:
    """Small-rho0 approximation of the necessary transmission rate.

    Intended regime rho0 << e^{sigma*gamma}/max{2, nu}; not enforced.
    """
    total = 0.0
    for lam, p in inp.blocks:
        if inp.gamma == 0:
            continue
        ratio = _ln_em1(lam * inp.gamma) / _ln_contraction(inp)
        total += p * (lam + inp.sigma) / LN2 * max(0.0, 1.0 + ratio)
    return total


def _log2_packet_term(lam: float, rho: float, inp: BoundInputs) -> float:
    """log2(b*gamma*(lam+sigma) / ln(1 + rho*e^{-(sigma+lam)*gamma}))."""
    u = (inp.sigma + lam) * inp.gamma
    num = math.log(inp.b * inp.gamma * (lam + inp.sigma))
    if u < 700:
        den = math.log(math.log1p(rho * math.exp(-u)))
    else:
        # ln(1+x) ~ x once x underflows territory: ln ln(1+x) ~ ln(rho) - u
        den = math.log(rho) - u
    return (num - den) / LN2


def transmission_rate_sufficient(inp: BoundInputs) -> float:
    """Bits/s achieved by the sign + quantized-trigger-time policy.

    Vector systems sum one term per coordinate, each using its ladder
    contraction in place of rho0.
    """
    if inp.gamma == 0:
        return 0.0
    total = 0.0
    rate_factor_den = _ln_contraction(inp)
    for lam, ladder in inp.rho_flat():
        for rho in ladder:
            term = max(0.0, 1.0 + _log2_packet_term(lam, rho, inp))
            total += (lam + inp.sigma) / rate_factor_den * term
    return total


def critical_delay(inp: BoundInputs) -> float:
    """Delay bound gamma_c below which the necessary transmission rate is zero.

    Root of e^{A*gamma} - rho0*e^{-sigma*gamma} = 1, bisected on
    [0, ln2/A]; the residual is monotone increasing with a sign change
    guaranteed on that bracket for rho0 in (0, 1).
    """
    A = inp.A

    def residual(g: float) -> float:
        return math.expm1(A * g) - inp.rho0 * math.exp(-inp.sigma * g)

    lo, hi = 0.0, LN2 / A
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if residual(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def equilibrium_delay(A: float) -> float:
    """Delay equal to the inverse entropy rate, ln2/A."""
    if not A > 0:
        raise PreconditionError(f"growth rate must be positive, got {A}")
    return LN2 / A


def rate_asymptote(inp: BoundInputs) -> float:
    """Large-delay limit of the transmission rate, (A+sigma)/ln2*(1+A/sigma)."""
    return sum(
        p * (lam + inp.sigma) / LN2 * (1.0 + lam / inp.sigma) for lam, p in inp.blocks
    )


def beta(inp: BoundInputs) -> float:
    """Delay over which the error sweeps one full quantization cell."""
    return math.log1p(2.0 * inp.rho0 * math.exp(-inp.sigma * inp.gamma)) / inp.A


def packet_size_sufficient(inp: BoundInputs) -> int:
    """Integer packet size meeting the sufficient-rate quantization bound.

    gamma = 0 returns 1: the sign bit alone suffices when timing is exact.
    """
    if inp.gamma == 0:
        return 1
    raw = 1.0 + _log2_packet_term(inp.A, inp.rho0, inp)
    return max(1, math.ceil(raw))


def time_quantization_tolerance(inp: BoundInputs) -> float:
    """Largest trigger-time quantization error that preserves the jump contract."""
    u = (inp.A + inp.sigma) * inp.gamma
    return math.log1p(inp.rho0 * math.exp(-u)) / (inp.A + inp.sigma)


@dataclass(frozen=True)
class Assumption1Window:
    """Result of the constant-packet-size design check."""

    lower_ok: bool
    upper_ok: bool
    expansion_ok: bool

    @property
    def all_ok(self) -> bool:
        return self.lower_ok and self.upper_ok and self.expansion_ok


def assumption1_window(inp: BoundInputs, g: int) -> Assumption1Window:
    """Check a constant packet size g against the nu-precision design window.

    lower_ok: g meets the sufficient-rate quantization bound.
    upper_ok: g does not quantize finer than nu-precision allows.
    expansion_ok: the cell-to-cell expansion condition with delta = b*gamma/2^(g-2).
    Requires nu >= 2 (the upper bound is undefined below that) and g >= 2.
    """
    if inp.nu < 2:
        raise PreconditionError(f"the design window needs nu >= 2, got {inp.nu}")
    if g < 2:
        raise PreconditionError(f"the design window needs g >= 2, got {g}")
    if inp.gamma == 0:
        raise PreconditionError("the design window needs a positive delay bound")
    lower = 1.0 + _log2_packet_term(inp.A, inp.rho0, inp)
    lower_ok = g >= lower

    re = inp.rho0 * math.exp(-inp.sigma * inp.gamma)
    eps = 1.0 / ((inp.nu - 1.0) * (2.0 + 1.0 / re))
    upper = math.log2(inp.b * inp.gamma * (inp.A + inp.sigma) / abs(math.log1p(-eps)))
    upper_ok = g <= upper

    delta = inp.b * inp.gamma / 2 ** (g - 2)
    u = (inp.A + inp.sigma) * delta
    lhs = (-math.expm1(-u / 2.0)) / (-math.expm1(-u / 4.0))
    expansion_ok = lhs >= math.exp(3.0 * u / 4.0)
    return Assumption1Window(lower_ok, upper_ok, expansion_ok)


@dataclass(frozen=True)
class CascadeBounds:
    """Per-coordinate trigger-level caps and envelope constants for one block."""

    upper: tuple[float, ...]  # max v0_i given v0_{i-1}, for i = 2..p
    envelope: tuple[float, ...]  # ((rho0 - rho_i) + e^{(lam+sigma)*gamma}), i = 1..p


def v0_cascade_bound(
    block: tuple[float, int],
    *,
    v0: tuple[float, ...],
    rho: tuple[float, ...],
    sigma: float,
    rho0: float,
    gamma: float,
) -> CascadeBounds:
    """Caps on the trigger levels of chained coordinates in one Jordan block.

    For i = 2..p the level v0_i may not exceed
    v0_{i-1}*(lam+sigma)*(rho0-rho_{i-1}) / (((rho0-rho_{i-1}) + E)*(E - 1)),
    E = e^{(lam+sigma)*gamma}: the slack rho0 - rho_{i-1} of the coordinate
    above must absorb the coupling that coordinate i injects.  gamma = 0
    degenerates to an infinite cap.  Also returns each coordinate's envelope
    constant (rho0 - rho_i) + E.
    """
    lam, p = block
    if len(v0) != p or len(rho) != p:
        raise PreconditionError(f"need {p} trigger levels and contractions, got {v0}, {rho}")
    E = math.exp((lam + sigma) * gamma)
    envelope = tuple((rho0 - r) + E for r in rho)
    upper = []
    for i in range(1, p):  # cap on v0[i] from v0[i-1]
        slack = rho0 - rho[i - 1]
        if slack <= 0:
            raise PreconditionError(
                f"ladder value {rho[i - 1]} leaves no coupling slack below rho0={rho0}"
            )
        if gamma == 0:
            upper.append(math.inf)
            continue
        upper.append(v0[i - 1] * (lam + sigma) * slack / ((slack + E) * (E - 1.0)))
    return CascadeBounds(upper=tuple(upper), envelope=envelope)


def per_coordinate_inputs(inp: BoundInputs, lam: float, rho: float) -> BoundInputs:
    """Scalar view of one coordinate: its eigenvalue and ladder contraction."""
    return replace(inp, blocks=((lam, 1),), rho0=rho, rho_ladders=None)
