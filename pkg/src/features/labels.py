"""
Per-accident encodings: severity label, hour/day-of-week and vehicle
categories.
"""

import json
import logging
import datetime
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Tuple

from src.ingest.accidents import AccidentRecord

logger = logging.getLogger(__name__)

VEHICLE_KEYWORDS_PATH = Path(__file__).parent / "data" / "vehicle_keywords.json"


@lru_cache(maxsize=1)
def load_vehicle_mapping() -> Dict:
    """Keyword rules mapping raw vehicle strings to categories."""
    with open(VEHICLE_KEYWORDS_PATH, "r", encoding="utf-8") as file:
        return json.load(file)


def vehicle_categories() -> List[str]:
    return list(load_vehicle_mapping()["categories"])


def severity_label(rec: AccidentRecord) -> int:
    """1 when the accident injured or killed at least one person, else 0."""
    return 1 if rec.injured + rec.killed >= 1 else 0


def temporal_features(timestamp: datetime.datetime) -> Tuple[int, int]:
    """(hour 0-23, day of week 0-6 with Monday = 0); minutes are dropped."""
    return timestamp.hour, timestamp.weekday()


def vehicle_category(raw: str) -> str:
    """
    Case-insensitive keyword match of a raw vehicle type.

    Rules are tried in file order and the first keyword found as a
    substring wins; anything unmatched is "other".
    """
    mapping = load_vehicle_mapping()
    text = raw.upper()
    for rule in mapping["rules"]:
        if any(keyword in text for keyword in rule["keywords"]):
            return rule["category"]
    return mapping["fallback"]


def vehicle_one_hot(vehicle_types: Iterable[str]) -> Dict[str, int]:
    """
    One flag per category; every vehicle in the record sets its flag.
    Records with no vehicle listed are flagged "other".
    """
    flags = {category: 0 for category in vehicle_categories()}
    seen = False
    for raw in vehicle_types:
        if raw.strip():
            flags[vehicle_category(raw)] = 1
            seen = True
    if not seen:
        flags[load_vehicle_mapping()["fallback"]] = 1
    return flags
