"""The closed drum-class vocabulary and the 9-class to 5-class grouping."""

from __future__ import annotations

# Canonical 9-class order; every K-indexed array in the toolkit follows it.
CLASS_NAMES = (
    "kick",
    "snare",
    "hihat_closed",
    "hihat_open",
    "hi_tom",
    "mid_tom",
    "low_tom",
    "crash_left",
    "ride",
)

NUM_CLASSES = len(CLASS_NAMES)

CLASS_INDEX = {name: i for i, name in enumerate(CLASS_NAMES)}

# 5-class evaluation grouping: kick/snare stand alone, hi-hats, toms and
# cymbals are pooled.
FIVE_CLASS_GROUPS = {
    "kick": "KD",
    "snare": "SD",
    "hihat_closed": "HH",
    "hihat_open": "HH",
    "hi_tom": "TT",
    "mid_tom": "TT",
    "low_tom": "TT",
    "crash_left": "CY",
    "ride": "CY",
}

FIVE_CLASS_NAMES = ("KD", "SD", "HH", "TT", "CY")
