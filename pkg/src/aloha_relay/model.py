"""Domain types and per-slot probability kernels for the two-hop access model.

The modeled system: IoT devices of two priority classes (critical and
non-critical) contend for a frame of T time-slots with slotted ALOHA. Each
transmission reaches each of L access points (APs) over an independent
erasure link (erasure probability eps1). An AP that ends a slot holding
exactly one decodable message relays it to a base station (BS) over a shared
erasure backhaul (erasure probability eps2, one relay slot later). Critical
transmissions use higher power, so they are immune to non-critical
interference while destroying simultaneous non-critical receptions.

Two BS receiver behaviors are supported:

* collision: any two or more backhaul packets of the same priority class
  arriving in a slot destroy each other, even if they carry the same message.
* superposition: copies of the SAME message combine constructively; only
  packets carrying different messages of the relevant class interfere.

All kernels are pure functions, safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence


class ReceiverModel(str, Enum):
    COLLISION = "collision"
    SUPERPOSITION = "superposition"


class Sharing(str, Enum):
    NONORTHOGONAL = "nonorthogonal"
    TDMA = "tdma"


class ConfigError(ValueError):
    """A scenario parameter violates its documented range or constraint."""


@dataclass(frozen=True)
class SystemConfig:
    """Full scenario description.

    Loads are in packets per frame; ``critical_fraction`` splits the total
    load between the two classes. Under TDMA, the first
    ``tdma_fraction * slots_per_frame`` slots of the frame are reserved for
    critical traffic and the rest for non-critical traffic;
    ``tdma_fraction`` is ignored under non-orthogonal sharing.
    """

    total_load: float
    critical_fraction: float
    slots_per_frame: int
    num_aps: int
    access_erasure: float
    backhaul_erasure: float
    receiver_model: ReceiverModel = ReceiverModel.COLLISION
    sharing: Sharing = Sharing.NONORTHOGONAL
    tdma_fraction: float = 0.5

    @property
    def critical_slot_load(self) -> float:
        """Mean critical transmissions per slot under non-orthogonal sharing."""
        return self.critical_fraction * self.total_load / self.slots_per_frame

    @property
    def noncritical_slot_load(self) -> float:
        return (1.0 - self.critical_fraction) * self.total_load / self.slots_per_frame

    @property
    def critical_slots(self) -> float:
        """Slots reserved for critical traffic under TDMA (may be fractional)."""
        return self.tdma_fraction * self.slots_per_frame


def validate_config(raw: SystemConfig, for_simulation: bool = False) -> SystemConfig:
    """Check every field of ``raw`` and return it unchanged.

    With ``for_simulation`` set, additionally require an integer number of
    TDMA critical slots, which the frame simulator needs (the analytic
    engine accepts any real tdma_fraction).

    Raises ConfigError naming the offending field.
    """
    if not math.isfinite(raw.total_load) or raw.total_load < 0:
        raise ConfigError(f"total_load out of [0, inf): {raw.total_load!r}")
    if not 0.0 <= raw.critical_fraction <= 1.0:
        raise ConfigError(f"critical_fraction out of [0,1]: {raw.critical_fraction!r}")
    if not isinstance(raw.slots_per_frame, int) or raw.slots_per_frame < 1:
        raise ConfigError(f"slots_per_frame must be an integer >= 1: {raw.slots_per_frame!r}")
    if not isinstance(raw.num_aps, int) or raw.num_aps < 1:
        raise ConfigError(f"num_aps must be an integer >= 1: {raw.num_aps!r}")
    if not 0.0 <= raw.access_erasure <= 1.0:
        raise ConfigError(f"access_erasure out of [0,1]: {raw.access_erasure!r}")
    if not 0.0 <= raw.backhaul_erasure <= 1.0:
        raise ConfigError(f"backhaul_erasure out of [0,1]: {raw.backhaul_erasure!r}")
    if not isinstance(raw.receiver_model, ReceiverModel):
        raise ConfigError(f"receiver_model must be a ReceiverModel: {raw.receiver_model!r}")
    if not isinstance(raw.sharing, Sharing):
        raise ConfigError(f"sharing must be a Sharing: {raw.sharing!r}")
    if not 0.0 <= raw.tdma_fraction <= 1.0:
        raise ConfigError(f"tdma_fraction out of [0,1]: {raw.tdma_fraction!r}")
    if for_simulation and raw.sharing is Sharing.TDMA:
        slots = raw.tdma_fraction * raw.slots_per_frame
        if abs(slots - round(slots)) > 1e-9:
            raise ConfigError(
                "tdma_fraction * slots_per_frame must be an integer for simulation, "
                f"got {slots!r}"
            )
    return raw


@dataclass(frozen=True)
class SlotLoad:
    """Realized transmission counts in one slot."""

    n_c: int
    n_cbar: int


@dataclass(frozen=True)
class ApTally:
    """Per-slot AP outcome summary.

    ``m_c``/``m_cbar`` count APs holding a critical / non-critical message
    (the collision-model sufficient statistic). ``copy_counts`` optionally
    carries the per-message copy vector the superposition model needs,
    indexed by message: entries 1..n_c are critical, the rest non-critical.
    """

    m_c: int
    m_cbar: int
    copy_counts: Optional[tuple[int, ...]] = None


@dataclass(frozen=True)
class BsState:
    """BS outcome of one slot: at most one message is ever retrieved.

    Non-critical retrieval requires every critical backhaul packet erased,
    so the critical and non-critical decode events cannot coincide.
    """

    kind: str  # "critical" | "noncritical" | "idle"
    message: Optional[int] = None

    @classmethod
    def critical(cls, message: int) -> "BsState":
        return cls("critical", message)

    @classmethod
    def noncritical(cls, message: int) -> "BsState":
        return cls("noncritical", message)

    @classmethod
    def idle(cls) -> "BsState":
        return cls("idle")


def resolve_ap(critical_ids: Sequence[int], noncritical_ids: Sequence[int]) -> int:
    """Apply the AP reception rule to the messages that survived the access hop.

    Returns the held message id, or 0 when the AP ends the slot empty
    (collision among critical receptions, critical power stomping a lone
    non-critical one, multi non-critical collision, or nothing received).
    """
    if len(critical_ids) == 1:
        return critical_ids[0]
    if len(critical_ids) == 0 and len(noncritical_ids) == 1:
        return noncritical_ids[0]
    return 0


def resolve_bs(
    received_critical_ids: Sequence[int],
    received_noncritical_ids: Sequence[int],
    model: ReceiverModel,
) -> BsState:
    """Apply the BS reception rule to backhaul packets that survived erasure.

    ``received_*_ids`` list message ids packet-by-packet; the same id appears
    once per surviving relayed copy.
    """
    rc, rn = received_critical_ids, received_noncritical_ids
    if model is ReceiverModel.COLLISION:
        if len(rc) == 1:
            return BsState.critical(rc[0])
        if len(rc) == 0 and len(rn) == 1:
            return BsState.noncritical(rn[0])
        return BsState.idle()
    if len(rc) >= 1 and len(set(rc)) == 1:
        return BsState.critical(rc[0])
    if len(rc) == 0 and len(rn) >= 1 and len(set(rn)) == 1:
        return BsState.noncritical(rn[0])
    return BsState.idle()


def access_success_probs(n_c: int, n_cbar: int, eps1: float) -> tuple[float, float]:
    """Probabilities that one AP retrieves a critical / non-critical message.

    Given n_c critical and n_cbar non-critical transmissions in the slot:

        p_c    = n_c (1-eps1) eps1^(n_c-1)
        p_cbar = n_cbar (1-eps1) eps1^(n_cbar-1) * eps1^n_c

    The eps1^n_c factor is the requirement that every critical transmission
    be erased before a non-critical one can get through. Zero counts give
    probability 0 regardless of eps1 (the 0^0 = 1 convention applies to the
    surviving-link exponents).
    """
    p_c = n_c * (1.0 - eps1) * eps1 ** (n_c - 1) if n_c > 0 else 0.0
    p_cbar = (
        n_cbar * (1.0 - eps1) * eps1 ** (n_cbar - 1) * eps1**n_c if n_cbar > 0 else 0.0
    )
    return p_c, p_cbar


def bs_probs_collision(m_c: int, m_cbar: int, eps2: float) -> tuple[float, float]:
    """BS decode probabilities under the collision model.

    Given m_c critical and m_cbar non-critical relayed packets:

        q_c    = m_c (1-eps2) eps2^(m_c-1)
        q_cbar = m_cbar (1-eps2) eps2^m_c eps2^(m_cbar-1)

    Exactly one packet of the class must survive, and for the non-critical
    class every critical packet must additionally be erased.
    """
    q_c = m_c * (1.0 - eps2) * eps2 ** (m_c - 1) if m_c > 0 else 0.0
    q_cbar = (
        m_cbar * (1.0 - eps2) * eps2 ** (m_cbar - 1) * eps2**m_c if m_cbar > 0 else 0.0
    )
    return q_c, q_cbar


def bs_probs_superposition(
    copy_counts: Sequence[int], n_c: int, n_cbar: int, eps2: float
) -> tuple[float, float]:
    """BS decode probabilities under the superposition model.

    ``copy_counts[m]`` is the number of APs relaying message m+1, with
    messages 1..n_c critical and n_c+1..n_c+n_cbar non-critical. Message m is
    decoded iff at least one of its copies survives the backhaul and every
    copy of every interfering message is erased; interferers are the other
    critical messages for a critical m, and the other non-critical messages
    plus all critical messages for a non-critical m:

        Pr[m decoded] = (1 - eps2^M_m) * eps2^(interfering copy total)

    The decode events are mutually exclusive, so the per-class sums are
    probabilities.
    """
    if len(copy_counts) != n_c + n_cbar:
        raise ValueError(
            f"copy_counts must have length n_c + n_cbar = {n_c + n_cbar}, "
            f"got {len(copy_counts)}"
        )
    total_c = sum(copy_counts[:n_c])
    total_cbar = sum(copy_counts[n_c:])
    q_c = 0.0
    for m in range(n_c):
        q_c += (1.0 - eps2 ** copy_counts[m]) * eps2 ** (total_c - copy_counts[m])
    q_cbar = 0.0
    for m in range(n_c, n_c + n_cbar):
        q_cbar += (1.0 - eps2 ** copy_counts[m]) * eps2 ** (
            total_cbar - copy_counts[m] + total_c
        )
    return q_c, q_cbar


def bs_probs_superposition_reference(
    copy_counts: Sequence[int], n_c: int, n_cbar: int, eps2: float
) -> tuple[float, float]:
    """Literal double-sum form of the superposition decode probabilities.

    Sums, per message, over the number j of its copies that survive the
    backhaul, with binomial weights. Kept as an independent cross-check of
    the factored form in :func:`bs_probs_superposition`; equality of the two
    is asserted by the test suite, not assumed.
    """
    if len(copy_counts) != n_c + n_cbar:
        raise ValueError(
            f"copy_counts must have length n_c + n_cbar = {n_c + n_cbar}, "
            f"got {len(copy_counts)}"
        )
    total_c = sum(copy_counts[:n_c])
    total_cbar = sum(copy_counts[n_c:])
    q_c = 0.0
    for m in range(n_c):
        mm = copy_counts[m]
        others = total_c - mm
        for j in range(1, mm + 1):
            q_c += (
                math.comb(mm, j)
                * (1.0 - eps2) ** j
                * eps2 ** (others + mm - j)
            )
    q_cbar = 0.0
    for m in range(n_c, n_c + n_cbar):
        mm = copy_counts[m]
        others = total_cbar - mm + total_c
        for j in range(1, mm + 1):
            q_cbar += (
                math.comb(mm, j)
                * (1.0 - eps2) ** j
                * eps2 ** (others + mm - j)
            )
    return q_c, q_cbar
