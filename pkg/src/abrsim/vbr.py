"""Deterministic ON-OFF background source.

During each ON window the source emits cells at fixed spacing given by its
amplitude; during OFF it is silent.  The cell grid is anchored to the window
start, so quantization error never accumulates across periods.  Cells are
injected directly at the bottleneck output port, where they take strict
priority over ABR traffic.
"""

from .config import VbrParams


def vbr_active(t_ns: int, params: VbrParams) -> bool:
    """True iff the source is inside an ON window at time t."""
    if t_ns < params.start_ns:
        return False
    return (t_ns - params.start_ns) % params.period_ns < params.on_ns


def next_vbr_cell_time(t_ns: int, params: VbrParams) -> int:
    """First cell emission strictly after t.

    Inside an ON window this is the next point of the window's cell grid;
    during OFF (or before the source starts) it is the start of the next ON
    window.
    """
    start = params.start_ns
    if t_ns < start:
        return start
    period = params.period_ns
    k = (t_ns - start) // period
    window = start + k * period
    on_end = window + params.on_ns
    if t_ns < on_end:
        gap = params.gap_ns
        nxt = window + ((t_ns - window) // gap + 1) * gap
        if nxt < on_end:
            return nxt
    return window + period


class VbrSource:
    """Event-driven emitter bound to one output port."""

    __slots__ = ("sim", "params", "port", "cells_emitted")

    def __init__(self, sim, params: VbrParams, port):
        self.sim = sim
        self.params = params
        self.port = port
        self.cells_emitted = 0

    def start(self) -> None:
        self.sim.at(self.params.start_ns, self._fire)

    def _fire(self, _arg) -> None:
        now = self.sim.now
        self.cells_emitted += 1
        self.port.on_vbr_cell(now)
        self.sim.at(next_vbr_cell_time(now, self.params), self._fire)
