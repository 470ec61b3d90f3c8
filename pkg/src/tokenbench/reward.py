"""Workout records and the DMD reward they earn.

The reward is linear in distance with an integer floor, then scaled by the
selected pet's bonus rate. Steps and duration are recorded but only feed the
consistency gate.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction

from . import errors

log = logging.getLogger(__name__)

BASE_RATE_DMD_PER_KM = 10
MAX_AVG_SPEED_KMH = 30
SPEED_TOLERANCE_KMH = Fraction(1, 2)


@dataclass(frozen=True)
class WorkoutRecord:
    duration_sec: float
    distance_m: float
    avg_speed_kmh: float
    steps: int = 0
    started_at: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "WorkoutRecord":
        return cls(
            duration_sec=d["durationSec"],
            distance_m=d["distanceM"],
            avg_speed_kmh=d["avgSpeedKmh"],
            steps=d.get("steps", 0),
            started_at=d.get("startedAt", ""),
        )

    def to_dict(self) -> dict:
        return {
            "durationSec": self.duration_sec,
            "distanceM": self.distance_m,
            "avgSpeedKmh": self.avg_speed_kmh,
            "steps": self.steps,
            "startedAt": self.started_at,
        }


@dataclass(frozen=True)
class RewardGrant:
    user: str
    pet_token_id: int | None
    base_dmd: int
    bonus_rate_pct: int
    total_dmd: int
    record: WorkoutRecord

    def to_dict(self) -> dict:
        return {
            "user": self.user,
            "petTokenId": self.pet_token_id,
            "baseDmd": self.base_dmd,
            "bonusRatePct": self.bonus_rate_pct,
            "totalDmd": self.total_dmd,
            "record": self.record.to_dict(),
        }


def validate_record(record: WorkoutRecord) -> None:
    for name in ("duration_sec", "distance_m", "avg_speed_kmh", "steps"):
        v = getattr(record, name)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise errors.InconsistentRecord(f"{name} must be a finite number, got {v!r}")
    if record.duration_sec <= 0:
        raise errors.InconsistentRecord("duration must be positive")
    if record.distance_m < 0 or record.steps < 0 or record.avg_speed_kmh < 0:
        raise errors.InconsistentRecord("distance, speed and steps must be non-negative")
    # km / h computed exactly so that the 0.5 km/h gate has no float slop
    implied = (Fraction(record.distance_m) / 1000) / (Fraction(record.duration_sec) / 3600)
    if abs(implied - Fraction(record.avg_speed_kmh)) > SPEED_TOLERANCE_KMH:
        raise errors.InconsistentRecord(
            f"avg speed {record.avg_speed_kmh} km/h disagrees with implied {float(implied):.3f} km/h"
        )
    if record.avg_speed_kmh > MAX_AVG_SPEED_KMH:
        raise errors.ImplausibleRecord(f"avg speed {record.avg_speed_kmh} km/h above {MAX_AVG_SPEED_KMH}")


def compute_reward(
    record: WorkoutRecord, bonus_rate_pct: int, base_rate_dmd_per_km: int = BASE_RATE_DMD_PER_KM
) -> tuple[int, int]:
    """Return ``(base_dmd, total_dmd)`` for one validated record."""
    validate_record(record)
    if bonus_rate_pct < 100:
        raise errors.InvalidBonusRate(f"bonus rate {bonus_rate_pct} below 100")
    base = math.floor(Fraction(record.distance_m) / 1000 * base_rate_dmd_per_km)
    return base, base * bonus_rate_pct // 100


def grant_reward(econ, caller: str, user: str, pet_token_id: int, record: WorkoutRecord) -> RewardGrant:
    """Mint the reward for ``record`` to ``user`` using the bonus of ``pet_token_id``.

    Only the operator can mint. The user must be earnable and own the pet at
    grant time; repeated submissions of the same record are granted again.
    """
    caller, user = caller.lower(), user.lower()
    if caller != econ.operator:
        raise errors.NotOperator(caller)
    if not econ.is_earnable(user):
        raise errors.NotEarnable(f"{user} owns no pet")
    if econ.owner_of.get(pet_token_id) != user:
        raise errors.NotPetOwner(f"{user} does not own pet #{pet_token_id}")
    bonus = econ.bonus_rate[pet_token_id]
    base, total = compute_reward(record, bonus, econ.base_rate_dmd_per_km)
    grant = RewardGrant(user, pet_token_id, base, bonus, total, record)
    if (user, record) in econ.granted_records:
        log.warning("repeat reward for identical workout record from %s", user)
    econ.granted_records.add((user, record))
    econ._mint(user, total)
    econ._emit(
        "Rewarded",
        user=user,
        petTokenId=pet_token_id,
        baseDmd=base,
        bonusRatePct=bonus,
        totalDmd=total,
        record=record.to_dict(),
    )
    log.debug("rewarded %s %d DMD (pet #%d, base %d)", user, total, pet_token_id, base)
    return grant
