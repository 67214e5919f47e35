"""Exact (truncated-expectation) throughput and reliability evaluation.

Throughputs R_c, R_cbar are the mean number of critical / non-critical
packets the BS decodes per slot. Reliability Gamma_c (Gamma_cbar) is the
mean fraction of the critical (non-critical) packets generated in a frame
that the BS retrieves, conditioned on at least one such packet being
generated.

Everything here reduces to per-slot conditional decode probabilities

    r_c(n_c, n_cbar), r_cbar(n_c, n_cbar)

obtained by averaging the BS kernels of :mod:`aloha_relay.model` over the
AP-outcome distribution, and then to expectations of those over truncated
Poisson slot loads. The AP outcomes in a slot are i.i.d. across APs
(categorical with probabilities p_c, p_cbar, idle), so:

* collision model: (M_c, M_cbar) is Multinomial(L; p_c, p_cbar) and r is a
  finite sum over (m_c, m_cbar);
* superposition model: per-message copy counts are multinomial with the
  per-message probabilities p_c/n_c and p_cbar/n_cbar, and the per-message
  decode expectation collapses by symmetry to a two-term power form, e.g.

      r_c = n_c [ (1 - (n_c-1)/n_c p_c s)^L - (1 - p_c s)^L ],  s = 1 - eps2.

The collapsed forms are exact; the test suite checks them against literal
enumeration over AP states / copy-count vectors and against the
erasure-pattern oracle in :mod:`aloha_relay.simulate`.

Computations are pure and deterministic for fixed inputs.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.stats import binom, poisson

from .model import (
    ReceiverModel,
    Sharing,
    SystemConfig,
    access_success_probs,
    bs_probs_collision,
    bs_probs_superposition,
    validate_config,
)


class TruncationError(RuntimeError):
    """The Poisson tail cannot be brought under tolerance within max_count."""

    def __init__(self, lam: float, tolerance: float, achieved_tail: float, max_count: int):
        self.lam = lam
        self.tolerance = tolerance
        self.achieved_tail = achieved_tail
        self.max_count = max_count
        super().__init__(
            f"Poisson(lambda={lam}) tail is {achieved_tail:.3e} at count {max_count}, "
            f"above tolerance {tolerance:.3e}"
        )


class EnumerationBudgetError(RuntimeError):
    """An exact enumeration would exceed the configured size budget."""

    def __init__(self, required: int, budget: int, n_c: int, n_cbar: int, num_aps: int):
        self.required = required
        self.budget = budget
        self.n_c = n_c
        self.n_cbar = n_cbar
        self.num_aps = num_aps
        super().__init__(
            f"enumeration needs {required} terms for n_c={n_c}, n_cbar={n_cbar}, "
            f"L={num_aps}, above budget {budget}; use the Monte Carlo engine instead"
        )


@dataclass(frozen=True)
class TruncationPolicy:
    """How far to carry Poisson expectations.

    ``tail_tolerance`` bounds the probability mass dropped beyond each
    cutoff; ``max_count`` caps the cutoff itself.
    """

    tail_tolerance: float = 1e-10
    max_count: int = 200

    def cutoff(self, lam: float) -> int:
        return poisson_truncation(lam, self.tail_tolerance, self.max_count)


DEFAULT_TRUNCATION = TruncationPolicy()


@dataclass(frozen=True)
class Provenance:
    method: str  # "analytic" | "monte-carlo"
    tail_tolerance: Optional[float] = None
    n_frames: Optional[int] = None
    seed: Optional[int] = None


@dataclass(frozen=True)
class ServiceMetrics:
    """Per-service throughputs [packet/slot] and reliabilities [fraction].

    Reliability is NaN when its conditioning event (at least one packet of
    the class generated in the frame) has probability zero.
    """

    R_c: float
    R_cbar: float
    Gamma_c: float
    Gamma_cbar: float
    provenance: Provenance


def poisson_truncation(lam: float, tail_tolerance: float, max_count: int = 200) -> int:
    """Smallest N with Pr[Poisson(lam) > N] < tail_tolerance."""
    if lam < 0 or not math.isfinite(lam):
        raise ValueError(f"lam must be finite and >= 0, got {lam!r}")
    if not 0.0 < tail_tolerance < 1.0:
        raise ValueError(f"tail_tolerance must be in (0,1), got {tail_tolerance!r}")
    if lam == 0.0:
        return 0
    counts = np.arange(max_count + 1)
    tails = poisson.sf(counts, lam)
    below = np.nonzero(tails < tail_tolerance)[0]
    if below.size == 0:
        raise TruncationError(lam, tail_tolerance, float(tails[-1]), max_count)
    return int(below[0])


def _poisson_weights(lam: float, n_max: int) -> np.ndarray:
    return poisson.pmf(np.arange(n_max + 1), lam)


def _access_prob_grids(
    eps1: float, nmax_c: int, nmax_cbar: int
) -> tuple[np.ndarray, np.ndarray]:
    """p_c over n_c = 0..nmax_c and p_cbar over the (n_c, n_cbar) grid."""
    n_c = np.arange(nmax_c + 1, dtype=float)
    n_cb = np.arange(nmax_cbar + 1, dtype=float)
    p_c = np.zeros(nmax_c + 1)
    p_c[1:] = n_c[1:] * (1.0 - eps1) * eps1 ** (n_c[1:] - 1.0)
    p_cb = np.zeros((nmax_c + 1, nmax_cbar + 1))
    if nmax_cbar >= 1:
        row = n_cb[1:] * (1.0 - eps1) * eps1 ** (n_cb[1:] - 1.0)
        p_cb[:, 1:] = row[None, :] * (eps1**n_c)[:, None]
    return p_c, p_cb


def _kernel_tables(
    model: ReceiverModel,
    num_aps: int,
    eps1: float,
    eps2: float,
    nmax_c: int,
    nmax_cbar: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-slot conditional decode probabilities on a load grid.

    Returns ``(r_c, r_cbar)`` with ``r_c[n_c]`` and ``r_cbar[n_c, n_cbar]``.
    r_c carries no n_cbar axis: critical decoding is unaffected by
    non-critical traffic under both receiver models, and the marginalization
    over non-critical outcomes is exact.
    """
    L = num_aps
    p_c, p_cb = _access_prob_grids(eps1, nmax_c, nmax_cbar)
    if model is ReceiverModel.COLLISION:
        r_c = np.zeros(nmax_c + 1)
        for m_c in range(L + 1):
            q_c, _ = bs_probs_collision(m_c, 0, eps2)
            if q_c == 0.0:
                continue
            r_c += math.comb(L, m_c) * p_c**m_c * (1.0 - p_c) ** (L - m_c) * q_c
        r_cb = np.zeros_like(p_cb)
        rest = np.clip(1.0 - p_c[:, None] - p_cb, 0.0, 1.0)
        for m_cb in range(1, L + 1):
            for m_c in range(L - m_cb + 1):
                _, q_cb = bs_probs_collision(m_c, m_cb, eps2)
                if q_cb == 0.0:
                    continue
                coeff = math.factorial(L) // (
                    math.factorial(m_c) * math.factorial(m_cb) * math.factorial(L - m_c - m_cb)
                )
                r_cb += (
                    coeff
                    * p_c[:, None] ** m_c
                    * p_cb**m_cb
                    * rest ** (L - m_c - m_cb)
                    * q_cb
                )
        return r_c, r_cb

    s = 1.0 - eps2
    r_c = np.zeros(nmax_c + 1)
    if nmax_c >= 1:
        n = np.arange(1, nmax_c + 1, dtype=float)
        pc = p_c[1:]
        keep = np.clip(1.0 - (n - 1.0) / n * pc * s, 0.0, 1.0)
        drop = np.clip(1.0 - pc * s, 0.0, 1.0)
        r_c[1:] = n * (keep**L - drop**L)
    r_cb = np.zeros((nmax_c + 1, nmax_cbar + 1))
    if nmax_cbar >= 1:
        n = np.arange(1, nmax_cbar + 1, dtype=float)[None, :]
        pcb = p_cb[:, 1:]
        pc_col = p_c[:, None]
        keep = np.clip(1.0 - ((n - 1.0) / n * pcb + pc_col) * s, 0.0, 1.0)
        drop = np.clip(1.0 - (pcb + pc_col) * s, 0.0, 1.0)
        r_cb[:, 1:] = n * (keep**L - drop**L)
    return r_c, r_cb


def slot_decode_probs(
    n_c: int, n_cbar: int, cfg: SystemConfig
) -> tuple[float, float]:
    """Exact BS decode probabilities for a slot with the given loads.

    This is the composition of the access kernel, the AP-outcome
    distribution, and the BS kernel for ``cfg.receiver_model``; it is the
    quantity the erasure-pattern oracle recomputes from scratch.
    """
    r_c, r_cb = _kernel_tables(
        cfg.receiver_model,
        cfg.num_aps,
        cfg.access_erasure,
        cfg.backhaul_erasure,
        n_c,
        n_cbar,
    )
    return float(r_c[n_c]), float(r_cb[n_c, n_cbar])


def superposition_decode_by_state_enumeration(
    n_c: int,
    n_cbar: int,
    num_aps: int,
    eps1: float,
    eps2: float,
    budget: int = 10**6,
) -> tuple[float, float]:
    """Superposition decode probabilities by enumerating per-AP states.

    Each AP independently holds nothing, or one specific message, with the
    categorical probabilities (1 - p_c - p_cbar, p_c/n_c ..., p_cbar/n_cbar
    ...). Iterates over all (n_c + n_cbar + 1)^L state tuples.
    """
    total = n_c + n_cbar
    if total == 0:
        return 0.0, 0.0
    required = (total + 1) ** num_aps
    if required > budget:
        raise EnumerationBudgetError(required, budget, n_c, n_cbar, num_aps)
    p_c, p_cb = access_success_probs(n_c, n_cbar, eps1)
    state_probs = [max(1.0 - p_c - p_cb, 0.0)]
    state_probs += [p_c / n_c] * n_c
    state_probs += [p_cb / n_cbar] * n_cbar
    q_c = q_cb = 0.0
    for states in itertools.product(range(total + 1), repeat=num_aps):
        w = 1.0
        for st in states:
            w *= state_probs[st]
        if w == 0.0:
            continue
        counts = [0] * total
        for st in states:
            if st:
                counts[st - 1] += 1
        dc, dcb = bs_probs_superposition(counts, n_c, n_cbar, eps2)
        q_c += w * dc
        q_cb += w * dcb
    return q_c, q_cb


def superposition_decode_by_count_enumeration(
    n_c: int,
    n_cbar: int,
    num_aps: int,
    eps1: float,
    eps2: float,
    budget: int = 10**6,
) -> tuple[float, float]:
    """Superposition decode probabilities by enumerating copy-count vectors.

    Iterates over all weak compositions of the L APs into the idle cell plus
    one cell per message, weighting each by its multinomial probability.
    Agrees with :func:`superposition_decode_by_state_enumeration` exactly;
    the redundancy is intentional and covered by tests.
    """
    total = n_c + n_cbar
    if total == 0:
        return 0.0, 0.0
    required = math.comb(num_aps + total, total)
    if required > budget:
        raise EnumerationBudgetError(required, budget, n_c, n_cbar, num_aps)
    p_c, p_cb = access_success_probs(n_c, n_cbar, eps1)
    cell_probs = [max(1.0 - p_c - p_cb, 0.0)]
    cell_probs += [p_c / n_c] * n_c
    cell_probs += [p_cb / n_cbar] * n_cbar
    L = num_aps
    fact_L = math.factorial(L)
    q_c = q_cb = 0.0
    # stars-and-bars: bar positions among L stars + `total` bars
    for bars in itertools.combinations(range(L + total), total):
        counts_all = []
        prev = -1
        for b in bars:
            counts_all.append(b - prev - 1)
            prev = b
        counts_all.append(L + total - 1 - prev)
        w = fact_L
        for k in counts_all:
            w //= math.factorial(k)
        weight = float(w)
        for k, p in zip(counts_all, cell_probs):
            weight *= p**k
        if weight == 0.0:
            continue
        dc, dcb = bs_probs_superposition(counts_all[1:], n_c, n_cbar, eps2)
        q_c += weight * dc
        q_cb += weight * dcb
    return q_c, q_cb


def _throughput(
    model: ReceiverModel,
    lam_c: float,
    lam_cbar: float,
    num_aps: int,
    eps1: float,
    eps2: float,
    trunc: TruncationPolicy,
) -> tuple[float, float]:
    n_max_c = trunc.cutoff(lam_c)
    n_max_cb = trunc.cutoff(lam_cbar)
    r_c, r_cb = _kernel_tables(model, num_aps, eps1, eps2, n_max_c, n_max_cb)
    w_c = _poisson_weights(lam_c, n_max_c)
    w_cb = _poisson_weights(lam_cbar, n_max_cb)
    return float(w_c @ r_c), float(w_c @ r_cb @ w_cb)


def throughput_collision(
    cfg: SystemConfig, trunc: TruncationPolicy = DEFAULT_TRUNCATION
) -> tuple[float, float]:
    """(R_c, R_cbar) under the collision model with the full frame shared.

    The sharing field is ignored here; use :func:`tdma_metrics` (or
    :func:`analytic_metrics`) for TDMA scenarios.
    """
    validate_config(cfg)
    if cfg.receiver_model is not ReceiverModel.COLLISION:
        raise ValueError("throughput_collision needs receiver_model=collision")
    return _throughput(
        ReceiverModel.COLLISION,
        cfg.critical_slot_load,
        cfg.noncritical_slot_load,
        cfg.num_aps,
        cfg.access_erasure,
        cfg.backhaul_erasure,
        trunc,
    )


def throughput_superposition(
    cfg: SystemConfig, trunc: TruncationPolicy = DEFAULT_TRUNCATION
) -> tuple[float, float]:
    """(R_c, R_cbar) under the superposition model with the full frame shared."""
    validate_config(cfg)
    if cfg.receiver_model is not ReceiverModel.SUPERPOSITION:
        raise ValueError("throughput_superposition needs receiver_model=superposition")
    return _throughput(
        ReceiverModel.SUPERPOSITION,
        cfg.critical_slot_load,
        cfg.noncritical_slot_load,
        cfg.num_aps,
        cfg.access_erasure,
        cfg.backhaul_erasure,
        trunc,
    )


def _gamma_sum(
    t_eff: float, lam_total: float, k_max: int, rbar: np.ndarray
) -> float:
    """E[ decoded / generated | generated >= 1 ] for one service.

    ``lam_total`` is the mean number of packets of the service generated per
    frame, ``t_eff`` the number of slots they contend for, and ``rbar[j]``
    the probability that a given slot carrying j of them is decoded
    (already averaged over the other service's load where relevant).

    Conditioned on the frame total K, each packet lands in a uniform slot,
    so the slot-1 count is Bin(K, 1/t_eff) and slot symmetry turns the
    decoded-count expectation into t_eff times the slot-1 decode
    probability. The ratio's denominator K is fixed by the conditioning, so
    the expectation of the ratio is exact, not a ratio of expectations.
    """
    z = -math.expm1(-lam_total)
    pk = _poisson_weights(lam_total, k_max)
    total = 0.0
    for k in range(1, k_max + 1):
        slot_counts = np.arange(k + 1)
        inner = binom.pmf(slot_counts, k, 1.0 / t_eff) @ rbar[: k + 1]
        total += pk[k] / z * (t_eff / k) * inner
    return float(total)


def reliability_analytic(
    cfg: SystemConfig, trunc: TruncationPolicy = DEFAULT_TRUNCATION
) -> tuple[float, float]:
    """(Gamma_c, Gamma_cbar) with the full frame shared (non-orthogonal).

    A service with zero offered load has an undefined reliability (the
    conditioning event is null) and reports NaN.
    """
    validate_config(cfg)
    model = cfg.receiver_model
    L, e1, e2 = cfg.num_aps, cfg.access_erasure, cfg.backhaul_erasure
    t = float(cfg.slots_per_frame)
    lam_c_total = cfg.critical_fraction * cfg.total_load
    lam_cb_total = (1.0 - cfg.critical_fraction) * cfg.total_load

    if lam_c_total == 0.0:
        gamma_c = math.nan
    else:
        k_max = trunc.cutoff(lam_c_total)
        r_c, _ = _kernel_tables(model, L, e1, e2, k_max, 0)
        gamma_c = _gamma_sum(t, lam_c_total, k_max, r_c)

    if lam_cb_total == 0.0:
        gamma_cb = math.nan
    else:
        k_max = trunc.cutoff(lam_cb_total)
        n_max_c = trunc.cutoff(cfg.critical_slot_load)
        _, r_cb = _kernel_tables(model, L, e1, e2, n_max_c, k_max)
        w_c = _poisson_weights(cfg.critical_slot_load, n_max_c)
        rbar = w_c @ r_cb
        gamma_cb = _gamma_sum(t, lam_cb_total, k_max, rbar)

    return gamma_c, gamma_cb


@dataclass(frozen=True)
class TdmaThroughput:
    """Frame-normalized and raw sub-frame TDMA throughputs.

    ``R_c``/``R_cbar`` are per slot of the FULL frame (sub-frame rates scaled
    by the slot shares alpha and 1-alpha) so they compare directly with
    non-orthogonal sharing; the ``subframe_*`` fields are per slot of the
    service's own partition.
    """

    R_c: float
    R_cbar: float
    subframe_R_c: float
    subframe_R_cbar: float


def tdma_throughput(
    cfg: SystemConfig, trunc: TruncationPolicy = DEFAULT_TRUNCATION
) -> TdmaThroughput:
    """Throughputs under inter-service TDMA.

    Each service sees only its own partition: critical traffic contends on
    alpha*T slots with per-slot load gamma_c*G/(alpha*T) and no non-critical
    interference, and vice versa. A service whose partition is empty while
    it still has load is starved and gets rate 0.
    """
    validate_config(cfg)
    if cfg.sharing is not Sharing.TDMA:
        raise ValueError("tdma_throughput needs sharing=tdma")
    model = cfg.receiver_model
    L, e1, e2 = cfg.num_aps, cfg.access_erasure, cfg.backhaul_erasure
    alpha = cfg.tdma_fraction
    t = float(cfg.slots_per_frame)
    t_c = alpha * t
    t_cb = t - t_c
    lam_c_total = cfg.critical_fraction * cfg.total_load
    lam_cb_total = (1.0 - cfg.critical_fraction) * cfg.total_load

    if t_c == 0.0 or lam_c_total == 0.0:
        sub_c = 0.0
    else:
        per_slot = lam_c_total / t_c
        n_max = trunc.cutoff(per_slot)
        r_c, _ = _kernel_tables(model, L, e1, e2, n_max, 0)
        sub_c = float(_poisson_weights(per_slot, n_max) @ r_c)

    if t_cb == 0.0 or lam_cb_total == 0.0:
        sub_cb = 0.0
    else:
        per_slot = lam_cb_total / t_cb
        n_max = trunc.cutoff(per_slot)
        _, r_cb = _kernel_tables(model, L, e1, e2, 0, n_max)
        sub_cb = float(_poisson_weights(per_slot, n_max) @ r_cb[0, :])

    return TdmaThroughput(
        R_c=alpha * sub_c,
        R_cbar=(1.0 - alpha) * sub_cb,
        subframe_R_c=sub_c,
        subframe_R_cbar=sub_cb,
    )


def _tdma_gamma(
    model: ReceiverModel,
    num_aps: int,
    eps1: float,
    eps2: float,
    t_service: float,
    lam_total: float,
    critical_side: bool,
    trunc: TruncationPolicy,
) -> float:
    if lam_total == 0.0:
        return math.nan
    if t_service == 0.0:
        return 0.0  # packets are generated but have no slots to use
    if t_service < 1.0:
        return math.nan  # fractional sub-frame shorter than one slot
    k_max = trunc.cutoff(lam_total)
    if critical_side:
        rbar, _ = _kernel_tables(model, num_aps, eps1, eps2, k_max, 0)
    else:
        _, r_cb = _kernel_tables(model, num_aps, eps1, eps2, 0, k_max)
        rbar = r_cb[0, :]
    return _gamma_sum(t_service, lam_total, k_max, rbar)


def tdma_metrics(
    cfg: SystemConfig, trunc: TruncationPolicy = DEFAULT_TRUNCATION
) -> ServiceMetrics:
    """Full metric set under inter-service TDMA.

    Reliability uses each service's own sub-frame length. It is 0 for a
    starved service with nonzero load, NaN when the service has no load,
    and NaN for fractional sub-frames shorter than one slot (the analytic
    continuation in alpha covers throughput only).
    """
    tp = tdma_throughput(cfg, trunc)
    model = cfg.receiver_model
    L, e1, e2 = cfg.num_aps, cfg.access_erasure, cfg.backhaul_erasure
    t = float(cfg.slots_per_frame)
    t_c = cfg.tdma_fraction * t
    gamma_c = _tdma_gamma(
        model, L, e1, e2, t_c,
        cfg.critical_fraction * cfg.total_load, True, trunc,
    )
    gamma_cb = _tdma_gamma(
        model, L, e1, e2, t - t_c,
        (1.0 - cfg.critical_fraction) * cfg.total_load, False, trunc,
    )
    return ServiceMetrics(
        R_c=tp.R_c,
        R_cbar=tp.R_cbar,
        Gamma_c=gamma_c,
        Gamma_cbar=gamma_cb,
        provenance=Provenance(method="analytic", tail_tolerance=trunc.tail_tolerance),
    )


def analytic_metrics(
    cfg: SystemConfig, trunc: TruncationPolicy = DEFAULT_TRUNCATION
) -> ServiceMetrics:
    """All four metrics for ``cfg``, dispatching on its sharing scheme."""
    validate_config(cfg)
    if cfg.sharing is Sharing.TDMA:
        return tdma_metrics(cfg, trunc)
    if cfg.receiver_model is ReceiverModel.COLLISION:
        r_c, r_cb = throughput_collision(cfg, trunc)
    else:
        r_c, r_cb = throughput_superposition(cfg, trunc)
    gamma_c, gamma_cb = reliability_analytic(cfg, trunc)
    return ServiceMetrics(
        R_c=r_c,
        R_cbar=r_cb,
        Gamma_c=gamma_c,
        Gamma_cbar=gamma_cb,
        provenance=Provenance(method="analytic", tail_tolerance=trunc.tail_tolerance),
    )


def nonorthogonal_variant(cfg: SystemConfig, **overrides) -> SystemConfig:
    """Convenience: copy ``cfg`` with sharing=nonorthogonal plus overrides."""
    return replace(cfg, sharing=Sharing.NONORTHOGONAL, **overrides)
