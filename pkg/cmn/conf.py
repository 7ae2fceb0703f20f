from __future__ import annotations

# External
from django.conf import settings
from django.core.exceptions import ImproperlyConfigured

# Internal
from pathlib import Path
from typing import Any

DEFAULTS: dict[str, Any] = {
    "WORLD_ATOM_CAP": 24,
    "ARITY_CAP": 3,
    "PROPOSITION_CAP": 20,
    "WEIGHT_CLAMP": 30.0,
    "LEARNING_TOLERANCE": 1e-8,
    "LEARNING_MAX_ITERATIONS": 100,
    "BATCH_SIZE": 4096,
    "SAMPLING_CELL_BUDGET": 1 << 24,
    "CONSTANT_POOL_PREFIX": "a",
    "FIXTURES_DIR": Path(__file__).resolve().parent / "fixtures",
}


def get_setting(name: str) -> Any:
    """Read an engine setting from `settings.RELSCALE`, falling back to the built-in default."""

    try:
        configured = getattr(settings, "RELSCALE", {})
    except ImproperlyConfigured:
        configured = {}
    if name in configured:
        return configured[name]
    if name not in DEFAULTS:
        raise KeyError(f"Unknown relscale setting: {name}")
    return DEFAULTS[name]
