from enum import Enum


class Intent(str, Enum):
    """Hypothesized world state behind a measurement."""

    SPEED_UP = "speed_up"
    SLOW_DOWN = "slow_down"
    IDLE = "idle"

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("-", "_")
        aliases = {"speedup": "speed_up", "slowdown": "slow_down", "up": "speed_up", "down": "slow_down"}
        return cls(aliases.get(key, key))
