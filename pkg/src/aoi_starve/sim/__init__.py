"""Subframe-level simulator of benign SPS vehicles plus an optional adversary."""

from .engine import (RunResult, RxEvent, TxEvent, eve_step, resolve_receptions, run,
                     sense_and_select, step_subframe, ue_state)
from .world import OUTCOME_NAMES, SimOptions, World, init_world

__all__ = [
    "RunResult", "RxEvent", "TxEvent", "World", "SimOptions", "OUTCOME_NAMES",
    "eve_step", "init_world", "resolve_receptions", "run", "sense_and_select",
    "step_subframe", "ue_state",
]
