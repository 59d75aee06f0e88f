"""Run parameters for a simulation, independent of any particular graph."""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass

from ..errors import ValidationError
from ..model import Violation

_TIME_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


def parse_utc(text: str) -> _dt.datetime:
    try:
        return _dt.datetime.strptime(text, _TIME_FORMAT).replace(tzinfo=_dt.timezone.utc)
    except ValueError:
        raise ValidationError([Violation("ATTRIBUTE_RANGE", "config.start_time",
                                         f"expected YYYY-MM-DDTHH:MM:SSZ, got {text!r}")]) from None


def format_utc(moment: _dt.datetime) -> str:
    return moment.strftime(_TIME_FORMAT)


@dataclass(frozen=True)
class SimulationConfig:
    horizon_s: int
    seed: int = 0
    sample_interval_s: int = 3600
    start_time: str = "2025-01-01T00:00:00Z"

    def validate(self):
        problems = []
        if self.horizon_s <= 0:
            problems.append(Violation("ATTRIBUTE_RANGE", "config.horizon_s", "must be > 0"))
        if self.sample_interval_s <= 0:
            problems.append(Violation("ATTRIBUTE_RANGE", "config.sample_interval_s", "must be > 0"))
        if not 0 <= self.seed < (1 << 64):
            problems.append(Violation("ATTRIBUTE_RANGE", "config.seed", "must fit in 64 bits"))
        if problems:
            raise ValidationError(problems)
        parse_utc(self.start_time)

    def timestamp_at(self, offset_s: int) -> str:
        return format_utc(parse_utc(self.start_time) + _dt.timedelta(seconds=offset_s))

    def as_dict(self) -> dict:
        return {
            "horizon_s": self.horizon_s,
            "seed": self.seed,
            "sample_interval_s": self.sample_interval_s,
            "start_time": self.start_time,
        }
