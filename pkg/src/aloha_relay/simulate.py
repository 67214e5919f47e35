"""Monte Carlo replication of the full generative process, plus an exact
erasure-pattern oracle for small slots.

The simulator draws frame-level Poisson device counts (the frame totals
matter to the reliability conditioning), assigns each device a uniform slot
in its partition, applies independent per-link access erasures, resolves
each AP, applies per-AP backhaul erasures, and resolves the BS under the
configured receiver model. The one-slot relay delay shifts timing only, not
tallies, so decodes are attributed to the originating access slot.

Randomness comes from counter-based Philox streams keyed by (seed, block),
with frames processed in fixed-size blocks: the result depends only on
(cfg, n_frames, seed), never on scheduling, and frame i is a function of
(seed, i // block, i % block).

``exact_slot_oracle`` recomputes per-slot decode probabilities by literally
enumerating every access-erasure and backhaul-erasure pattern and applying
the reception rules; it reuses none of the probability kernels and exists
to cross-check them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .analytic import Provenance, ServiceMetrics
from .model import ReceiverModel, Sharing, SlotLoad, SystemConfig, validate_config

FRAMES_PER_BLOCK = 4096
_DRAWS_PER_BLOCK = 65536
_ORACLE_MAX_LINKS = 24
_ORACLE_CHUNK = 1 << 20


class OracleBoundError(ValueError):
    """The requested slot is too large for exhaustive enumeration."""


@dataclass(frozen=True)
class FrameResult:
    """Outcome of one simulated frame."""

    slots: tuple[SlotLoad, ...]
    decoded_critical: int
    decoded_noncritical: int
    generated_critical: int
    generated_noncritical: int


@dataclass(frozen=True)
class MetricsEstimate:
    """Monte Carlo metric estimates with per-metric standard errors.

    Frames that generate zero packets of a class are excluded from that
    class's reliability estimate (the estimand conditions on at least one);
    the exclusion counts are reported. A reliability is NaN when every frame
    was excluded for its class.
    """

    metrics: ServiceMetrics
    se_R_c: float
    se_R_cbar: float
    se_Gamma_c: float
    se_Gamma_cbar: float
    frames_total: int
    frames_excluded_critical: int
    frames_excluded_noncritical: int
    seed: int


@dataclass(frozen=True)
class SlotConditionalEstimate:
    """Monte Carlo BS decode frequencies for a slot with fixed arrivals."""

    freq_c: float
    freq_cbar: float
    se_c: float
    se_cbar: float
    n_draws: int


def _block_rng(seed: int, block: int) -> np.random.Generator:
    key = np.array([seed % 2**64, block], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _bs_decode(
    holds_c: np.ndarray,
    ids_c: np.ndarray,
    holds_cb: np.ndarray,
    ids_cb: np.ndarray,
    backhaul_ok: np.ndarray,
    model: ReceiverModel,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized BS resolution over (cells, L) AP holdings."""
    relay_c = holds_c & backhaul_ok
    relay_cb = holds_cb & backhaul_ok
    k_c = relay_c.sum(axis=1)
    k_cb = relay_cb.sum(axis=1)
    if model is ReceiverModel.COLLISION:
        dec_c = k_c == 1
        dec_cb = (k_c == 0) & (k_cb == 1)
        return dec_c, dec_cb
    lo_c = np.where(relay_c, ids_c, np.inf).min(axis=1)
    hi_c = np.where(relay_c, ids_c, -np.inf).max(axis=1)
    dec_c = (k_c >= 1) & (lo_c == hi_c)
    lo_cb = np.where(relay_cb, ids_cb, np.inf).min(axis=1)
    hi_cb = np.where(relay_cb, ids_cb, -np.inf).max(axis=1)
    dec_cb = (k_c == 0) & (k_cb >= 1) & (lo_cb == hi_cb)
    return dec_c, dec_cb


def _transmission_windows(cfg: SystemConfig) -> tuple[tuple[int, int], tuple[int, int]]:
    t = cfg.slots_per_frame
    if cfg.sharing is Sharing.TDMA:
        t_crit = round(cfg.tdma_fraction * t)
        return (0, t_crit), (t_crit, t)
    return (0, t), (0, t)


def _simulate_frames(
    cfg: SystemConfig,
    n_frames: int,
    rng: np.random.Generator,
    want_slot_loads: bool = False,
) -> dict:
    """Simulate ``n_frames`` frames, vectorized over frames.

    Draw order is fixed (device counts, slot choices, access erasures per
    class, then backhaul erasures for every frame-slot-AP cell) so results
    are a pure function of the generator state.
    """
    F = n_frames
    t = cfg.slots_per_frame
    L = cfg.num_aps
    e1 = cfg.access_erasure
    e2 = cfg.backhaul_erasure
    cells = F * t
    win_c, win_cb = _transmission_windows(cfg)

    gen_c = rng.poisson(cfg.critical_fraction * cfg.total_load, F)
    gen_cb = rng.poisson((1.0 - cfg.critical_fraction) * cfg.total_load, F)

    def _choose_slots(gen: np.ndarray, window: tuple[int, int]):
        lo, hi = window
        n_dev = int(gen.sum())
        if hi <= lo:
            return None  # starved partition: packets exist but never air
        frame_of = np.repeat(np.arange(F), gen)
        slots = rng.integers(lo, hi, n_dev)
        return frame_of * t + slots

    cell_c = _choose_slots(gen_c, win_c)
    cell_cb = _choose_slots(gen_cb, win_cb)

    def _ap_stage(cell: Optional[np.ndarray]):
        if cell is None or cell.size == 0:
            shape = (cells, L)
            return np.zeros(shape, dtype=np.int64), np.zeros(shape)
        n_dev = cell.size
        surv = rng.random((n_dev, L)) >= e1
        link = cell[:, None] * L + np.arange(L)[None, :]
        flat = link[surv]
        cnt = np.bincount(flat, minlength=cells * L)
        ids = np.arange(1.0, n_dev + 1.0)
        weights = np.broadcast_to(ids[:, None], (n_dev, L))[surv]
        idsum = np.bincount(flat, weights=weights, minlength=cells * L)
        return cnt.reshape(cells, L), idsum.reshape(cells, L)

    cnt_c, idsum_c = _ap_stage(cell_c)
    cnt_cb, idsum_cb = _ap_stage(cell_cb)

    holds_c = cnt_c == 1
    holds_cb = (cnt_c == 0) & (cnt_cb == 1)
    backhaul_ok = rng.random((cells, L)) >= e2
    dec_c, dec_cb = _bs_decode(
        holds_c, idsum_c, holds_cb, idsum_cb, backhaul_ok, cfg.receiver_model
    )

    out = {
        "generated_c": gen_c,
        "generated_cbar": gen_cb,
        "decoded_c": dec_c.reshape(F, t).sum(axis=1),
        "decoded_cbar": dec_cb.reshape(F, t).sum(axis=1),
    }
    if want_slot_loads:
        def _loads(cell):
            if cell is None:
                return np.zeros((F, t), dtype=np.int64)
            return np.bincount(cell, minlength=cells).reshape(F, t)

        out["slot_loads_c"] = _loads(cell_c)
        out["slot_loads_cbar"] = _loads(cell_cb)
    return out


def simulate_frame(cfg: SystemConfig, rng: np.random.Generator) -> FrameResult:
    """Run one frame of the generative process with the caller's generator."""
    validate_config(cfg, for_simulation=True)
    res = _simulate_frames(cfg, 1, rng, want_slot_loads=True)
    slots = tuple(
        SlotLoad(int(nc), int(ncb))
        for nc, ncb in zip(res["slot_loads_c"][0], res["slot_loads_cbar"][0])
    )
    return FrameResult(
        slots=slots,
        decoded_critical=int(res["decoded_c"][0]),
        decoded_noncritical=int(res["decoded_cbar"][0]),
        generated_critical=int(res["generated_c"][0]),
        generated_noncritical=int(res["generated_cbar"][0]),
    )


def estimate_metrics(cfg: SystemConfig, n_frames: int, seed: int = 0) -> MetricsEstimate:
    """Unbiased metric estimates from ``n_frames`` independent frames.

    Throughput normalizes by the full frame length under both sharing
    schemes. Deterministic given (cfg, n_frames, seed).
    """
    validate_config(cfg, for_simulation=True)
    if n_frames < 1:
        raise ValueError(f"n_frames must be >= 1, got {n_frames!r}")
    t = cfg.slots_per_frame

    sum_dec = np.zeros(2)
    sumsq_dec = np.zeros(2)
    sum_ratio = np.zeros(2)
    sumsq_ratio = np.zeros(2)
    n_included = np.zeros(2, dtype=np.int64)

    n_blocks = -(-n_frames // FRAMES_PER_BLOCK)
    for block in range(n_blocks):
        rng = _block_rng(seed, block)
        res = _simulate_frames(cfg, FRAMES_PER_BLOCK, rng)
        keep = min(FRAMES_PER_BLOCK, n_frames - block * FRAMES_PER_BLOCK)
        for i, (dec_key, gen_key) in enumerate(
            [("decoded_c", "generated_c"), ("decoded_cbar", "generated_cbar")]
        ):
            dec = res[dec_key][:keep].astype(np.float64)
            gen = res[gen_key][:keep]
            sum_dec[i] += dec.sum()
            sumsq_dec[i] += (dec * dec).sum()
            mask = gen > 0
            ratio = dec[mask] / gen[mask]
            sum_ratio[i] += ratio.sum()
            sumsq_ratio[i] += (ratio * ratio).sum()
            n_included[i] += int(mask.sum())

    def _mean_se(total, total_sq, n):
        mean = total / n
        if n < 2:
            return mean, math.nan
        var = max((total_sq - total * total / n) / (n - 1), 0.0)
        return mean, math.sqrt(var / n)

    rates, se_rates, gammas, se_gammas = [], [], [], []
    for i in range(2):
        mean_dec, se_dec = _mean_se(sum_dec[i], sumsq_dec[i], n_frames)
        rates.append(mean_dec / t)
        se_rates.append(se_dec / t)
        if n_included[i] == 0:
            gammas.append(math.nan)
            se_gammas.append(math.nan)
        else:
            g, se_g = _mean_se(sum_ratio[i], sumsq_ratio[i], int(n_included[i]))
            gammas.append(g)
            se_gammas.append(se_g)

    metrics = ServiceMetrics(
        R_c=rates[0],
        R_cbar=rates[1],
        Gamma_c=gammas[0],
        Gamma_cbar=gammas[1],
        provenance=Provenance(method="monte-carlo", n_frames=n_frames, seed=seed),
    )
    return MetricsEstimate(
        metrics=metrics,
        se_R_c=se_rates[0],
        se_R_cbar=se_rates[1],
        se_Gamma_c=se_gammas[0],
        se_Gamma_cbar=se_gammas[1],
        frames_total=n_frames,
        frames_excluded_critical=int(n_frames - n_included[0]),
        frames_excluded_noncritical=int(n_frames - n_included[1]),
        seed=seed,
    )


def simulate_slot_conditional(
    n_c: int,
    n_cbar: int,
    cfg: SystemConfig,
    n_draws: int,
    seed: int = 0,
) -> SlotConditionalEstimate:
    """Decode frequencies for one slot with the arrival counts held fixed.

    Exercises exactly the access-erasure, AP-resolution, backhaul, and BS
    stages, bypassing the Poisson/slot-choice layers; used to cross-check
    the kernels and the oracle.
    """
    validate_config(cfg)
    if n_draws < 1:
        raise ValueError(f"n_draws must be >= 1, got {n_draws!r}")
    L = cfg.num_aps
    e1 = cfg.access_erasure
    e2 = cfg.backhaul_erasure
    ids_c = np.arange(1.0, n_c + 1.0)
    ids_cb = np.arange(1.0, n_cbar + 1.0)

    hits_c = 0
    hits_cb = 0
    done = 0
    block = 0
    while done < n_draws:
        take = min(_DRAWS_PER_BLOCK, n_draws - done)
        rng = _block_rng(seed, block)
        surv_c = rng.random((take, n_c, L)) >= e1
        surv_cb = rng.random((take, n_cbar, L)) >= e1
        cnt_c = surv_c.sum(axis=1)
        cnt_cb = surv_cb.sum(axis=1)
        idsum_c = np.einsum("bdl,d->bl", surv_c, ids_c)
        idsum_cb = np.einsum("bdl,d->bl", surv_cb, ids_cb)
        holds_c = cnt_c == 1
        holds_cb = (cnt_c == 0) & (cnt_cb == 1)
        backhaul_ok = rng.random((take, L)) >= e2
        dec_c, dec_cb = _bs_decode(
            holds_c, idsum_c, holds_cb, idsum_cb, backhaul_ok, cfg.receiver_model
        )
        hits_c += int(dec_c.sum())
        hits_cb += int(dec_cb.sum())
        done += take
        block += 1

    freq_c = hits_c / n_draws
    freq_cb = hits_cb / n_draws
    se_c = math.sqrt(freq_c * (1.0 - freq_c) / n_draws)
    se_cb = math.sqrt(freq_cb * (1.0 - freq_cb) / n_draws)
    return SlotConditionalEstimate(freq_c, freq_cb, se_c, se_cb, n_draws)


def exact_slot_oracle(
    n_c: int, n_cbar: int, cfg: SystemConfig
) -> tuple[float, float]:
    """Exact BS decode probabilities for a slot, by brute-force enumeration.

    Sums over all 2^((n_c + n_cbar) * L) access-erasure patterns and all 2^L
    backhaul-erasure patterns, applying the AP and BS reception rules
    literally to each. No probability kernels are reused, which makes this
    the independent reference for everything analytic.
    """
    validate_config(cfg)
    jammed = n_c + n_cbar
    L = cfg.num_aps
    if jammed * L > _ORACLE_MAX_LINKS:
        raise OracleBoundError(
            f"(n_c + n_cbar) * L = {jammed * L} exceeds the enumeration bound "
            f"{_ORACLE_MAX_LINKS}"
        )
    if jammed == 0:
        return 0.0, 0.0
    base = jammed + 1
    n_profiles = base**L
    if n_profiles > (1 << 24):
        raise OracleBoundError(
            f"(n_c + n_cbar + 1)^L = {n_profiles} AP-holdings profiles exceed 2^24"
        )
    e1 = cfg.access_erasure
    e2 = cfg.backhaul_erasure
    n_bits = jammed * L
    ids_c = np.arange(1, n_c + 1, dtype=np.int64)
    ids_cb = np.arange(n_c + 1, jammed + 1, dtype=np.int64)
    base_powers = base ** np.arange(L, dtype=np.int64)

    # Stage 1: probability mass of every AP-holdings profile.
    mass = np.zeros(n_profiles)
    shifts = np.arange(n_bits, dtype=np.uint64)
    for start in range(0, 1 << n_bits, _ORACLE_CHUNK):
        stop = min(start + _ORACLE_CHUNK, 1 << n_bits)
        patterns = np.arange(start, stop, dtype=np.uint64)
        bits = ((patterns[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.uint8)
        n_surv = bits.sum(axis=1).astype(np.int64)
        prob = np.power(1.0 - e1, n_surv) * np.power(e1, n_bits - n_surv)
        surv = bits.reshape(-1, jammed, L)
        cnt_c = surv[:, :n_c, :].sum(axis=1, dtype=np.int64)
        cnt_cb = surv[:, n_c:, :].sum(axis=1, dtype=np.int64)
        idsum_c = np.einsum("pdl,d->pl", surv[:, :n_c, :], ids_c)
        idsum_cb = np.einsum("pdl,d->pl", surv[:, n_c:, :], ids_cb)
        hold = np.where(
            cnt_c == 1,
            idsum_c,
            np.where((cnt_c == 0) & (cnt_cb == 1), idsum_cb, 0),
        )
        keys = hold @ base_powers
        mass += np.bincount(keys, weights=prob, minlength=n_profiles)

    # Stage 2: BS outcome of every (profile, backhaul pattern) combination.
    profiles = (np.arange(n_profiles)[:, None] // base_powers[None, :]) % base
    masks = (
        (np.arange(1 << L)[:, None] >> np.arange(L)[None, :]) & 1
    ).astype(bool)
    kept = masks.sum(axis=1)
    p_bh = np.power(1.0 - e2, kept) * np.power(e2, L - kept)
    received = np.where(masks[None, :, :], profiles[:, None, :], 0)
    is_c = (received >= 1) & (received <= n_c)
    is_cb = received > n_c
    k_c = is_c.sum(axis=2)
    k_cb = is_cb.sum(axis=2)
    if cfg.receiver_model is ReceiverModel.COLLISION:
        dec_c = k_c == 1
        dec_cb = (k_c == 0) & (k_cb == 1)
    else:
        lo = np.where(is_c, received, jammed + 2).min(axis=2)
        hi = np.where(is_c, received, 0).max(axis=2)
        dec_c = (k_c >= 1) & (lo == hi)
        lo_cb = np.where(is_cb, received, jammed + 2).min(axis=2)
        hi_cb = np.where(is_cb, received, 0).max(axis=2)
        dec_cb = (k_c == 0) & (k_cb >= 1) & (lo_cb == hi_cb)

    q_c = float(mass @ (dec_c.astype(np.float64) @ p_bh))
    q_cb = float(mass @ (dec_cb.astype(np.float64) @ p_bh))
    return q_c, q_cb
