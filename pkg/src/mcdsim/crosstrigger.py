"""Cross-trigger unit: routes trigger sources onto eight shared lines and
drives a configurable break/suspend switch per destination.

Sources are named strings: "core<N>.trigger_out<K>", "core<N>.break_req",
"core<N>.suspend_req", "dma.*" equivalents, and external input pins
"pin.in0"/"pin.in1".  Destinations are "core<N>", "dma", "pin.out<K>".
Line routing is a pure OR with no latching; the switch schedules actions
`delay` cycles after the lines assert, which bounds halt slippage.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

NUM_LINES = 8
EXT_IN_PINS = ("pin.in0", "pin.in1")
EXT_OUT_PINS = ("pin.out0", "pin.out1")


class SwitchAction(Enum):
    BREAK = "BREAK"
    SUSPEND = "SUSPEND"
    NONE = "NONE"
    PULSE_OUT = "PULSE_OUT"


class CrossTriggerConfigError(ValueError):
    pass


def source_keys(num_cores: int) -> list[str]:
    keys = []
    names = ["core%d" % i for i in range(num_cores)] + ["dma"]
    for name in names:
        keys.extend("%s.trigger_out%d" % (name, k) for k in range(NUM_LINES))
        keys.append("%s.break_req" % name)
        keys.append("%s.suspend_req" % name)
    keys.extend(EXT_IN_PINS)
    return keys


class TriggerMatrix:
    """Boolean routing matrix sources x lines, stored as per-source masks."""

    def __init__(self, route: dict[str, int] | None = None):
        self.route_masks: dict[str, int] = {}
        for src, mask in (route or {}).items():
            self.connect(src, mask)

    def connect(self, source: str, mask: int):
        if not 0 <= mask < (1 << NUM_LINES):
            raise CrossTriggerConfigError("line mask 0x%x out of range" % mask)
        self.route_masks[source] = mask


def route(asserted_sources, matrix: TriggerMatrix) -> int:
    """Line state for one cycle: OR of the masks of all asserted sources."""
    lines = 0
    for src in asserted_sources:
        lines |= matrix.route_masks.get(src, 0)
    return lines


@dataclass(frozen=True)
class DestConfig:
    mask: int
    action: SwitchAction


class SwitchConfig:
    def __init__(self, dests: dict[str, DestConfig] | None = None, delay: int = 1):
        if delay < 0:
            raise CrossTriggerConfigError("propagation delay must be >= 0")
        self.delay = delay
        self.dests: dict[str, DestConfig] = {}
        for dest, cfg in (dests or {}).items():
            self.set_dest(dest, cfg)

    def set_dest(self, dest: str, cfg: DestConfig):
        if not 0 <= cfg.mask < (1 << NUM_LINES):
            raise CrossTriggerConfigError("line mask 0x%x out of range" % cfg.mask)
        is_core = dest.startswith("core")
        is_pin = dest in EXT_OUT_PINS
        if cfg.action is SwitchAction.BREAK and not is_core:
            raise CrossTriggerConfigError("BREAK is valid only for cores (%s)" % dest)
        if cfg.action is SwitchAction.SUSPEND and (is_core or is_pin):
            raise CrossTriggerConfigError("SUSPEND is valid only for non-core masters (%s)" % dest)
        if cfg.action is SwitchAction.PULSE_OUT and not is_pin:
            raise CrossTriggerConfigError("PULSE_OUT is valid only for pins (%s)" % dest)
        self.dests[dest] = cfg


@dataclass(frozen=True)
class PendingAction:
    dest: str
    action: SwitchAction
    due_cycle: int


def dispatch(line_state: int, switch: SwitchConfig, cycle: int) -> list[PendingAction]:
    """Actions scheduled for destinations whose mask intersects the lines."""
    out = []
    for dest, cfg in switch.dests.items():
        if cfg.action is SwitchAction.NONE:
            continue
        if line_state & cfg.mask:
            out.append(PendingAction(dest, cfg.action, cycle + switch.delay))
    return out


class PendingQueue:
    """Scheduled switch actions; duplicates for one destination coalesce to
    the earliest due cycle."""

    def __init__(self):
        self._due: dict[tuple[str, SwitchAction], int] = {}

    def add(self, actions):
        for a in actions:
            key = (a.dest, a.action)
            if key not in self._due or a.due_cycle < self._due[key]:
                self._due[key] = a.due_cycle

    def pop_due(self, cycle: int) -> list[PendingAction]:
        due = [PendingAction(d, a, c) for (d, a), c in self._due.items() if c <= cycle]
        for item in due:
            del self._due[(item.dest, item.action)]
        return due

    def __len__(self):
        return len(self._due)


def to_machine_actions(machine, due, warnings: list | None = None):
    """Translate due PendingActions into the machine's debug action feed.

    Break/suspend requests against DONE masters are dropped with a warning
    record; PULSE_OUT becomes a ('pulse', pin) entry for the caller's log.
    """
    feed = []
    pulses = []
    for item in due:
        if item.action is SwitchAction.BREAK:
            core_id = int(item.dest[4:])
            core = machine.cores[core_id]
            if core.mode.value == "DONE":
                if warnings is not None:
                    warnings.append("BREAK ignored: core%d is DONE" % core_id)
                continue
            feed.append(("break", core_id))
        elif item.action is SwitchAction.SUSPEND:
            feed.append(("suspend", machine.dma.id))
        elif item.action is SwitchAction.PULSE_OUT:
            pulses.append(item.dest)
    return feed, pulses
