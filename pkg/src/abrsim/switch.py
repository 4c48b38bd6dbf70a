"""Output-buffered bottleneck port.

One FIFO holds forward ABR cells (data and forward RM); background cells take
strict priority at every service opportunity but never preempt a cell already
on the wire.  The port feeds the rate-allocation engine with per-arrival
counts and closes measurement intervals on the cell-count limit or the
interval timer, whichever comes first.  Backward RM cells bypass the queue on
the reverse path and are stamped via `stamp_brm`.
"""

from collections import deque

from .abr import KIND_FRM
from .erica import EricaEngine


class BottleneckPort:
    """Shared output port of the first switch: the one congestible queue."""

    __slots__ = (
        "sim", "cell_time_ns", "capacity", "erica", "deliver",
        "abr_queue", "vbr_pending", "busy", "_start_pending", "abr_in_service",
        "max_queue_seen", "arrived_abr", "departed_abr", "dropped_abr",
        "arrived_vbr", "departed_vbr", "_timer_gen",
    )

    def __init__(self, sim, cell_time_ns: int, capacity: float,
                 erica: EricaEngine, deliver):
        self.sim = sim
        self.cell_time_ns = cell_time_ns
        self.capacity = capacity
        self.erica = erica
        self.deliver = deliver          # deliver(cell, departure_time)

        self.abr_queue = deque()
        self.vbr_pending = 0
        self.busy = False
        self._start_pending = False
        self.abr_in_service = 0
        self.max_queue_seen = 0
        self.arrived_abr = 0
        self.departed_abr = 0
        self.dropped_abr = 0
        self.arrived_vbr = 0
        self.departed_vbr = 0
        self._timer_gen = 0

    def start(self) -> None:
        """Arm the first measurement-interval timer."""
        self.erica.interval_start = self.sim.now
        self.sim.at(self.sim.now + self.erica.params.interval_ns,
                    self._interval_timer, self._timer_gen)

    @property
    def queue_cells(self) -> int:
        return len(self.abr_queue)

    # -- arrivals -----------------------------------------------------------

    def on_abr_cell(self, cell) -> None:
        self.arrived_abr += 1
        queue = self.abr_queue
        if len(queue) >= self.capacity:
            self.dropped_abr += 1
            return
        queue.append(cell)
        qlen = len(queue)
        if qlen > self.max_queue_seen:
            self.max_queue_seen = qlen
        if cell[0] == KIND_FRM:
            interval_done = self.erica.note_abr_cell(cell[1], True, cell[2])
        else:
            interval_done = self.erica.note_abr_cell(cell[1], False, None)
        if interval_done:
            self._finalize_interval(self.sim.now)
        if not self.busy and not self._start_pending:
            # defer one instant so a same-time background cell wins priority
            self._start_pending = True
            self.sim.at(self.sim.now, self._start_service)

    def on_vbr_cell(self, _now=None) -> None:
        self.vbr_pending += 1
        self.arrived_vbr += 1
        self.erica.note_vbr_cell()
        if not self.busy and not self._start_pending:
            self._start_pending = True
            self.sim.at(self.sim.now, self._start_service)

    # -- link service ------------------------------------------------------------

    def _start_service(self, _arg=None) -> None:
        self._start_pending = False
        if self.busy:
            return
        if self.vbr_pending:
            self.vbr_pending -= 1
            cell = None
        elif self.abr_queue:
            cell = self.abr_queue.popleft()
            self.abr_in_service = 1
        else:
            return
        self.busy = True
        self.sim.at(self.sim.now + self.cell_time_ns, self._complete_tx, cell)

    def _complete_tx(self, cell) -> None:
        now = self.sim.now
        if cell is None:
            self.departed_vbr += 1
        else:
            self.departed_abr += 1
            self.abr_in_service = 0
            self.deliver(cell, now)
        if self.vbr_pending:
            self.vbr_pending -= 1
            self.sim.at(now + self.cell_time_ns, self._complete_tx, None)
        elif self.abr_queue:
            self.abr_in_service = 1
            self.sim.at(now + self.cell_time_ns, self._complete_tx, self.abr_queue.popleft())
        else:
            self.busy = False

    # -- measurement intervals ------------------------------------------------------

    def _finalize_interval(self, now: int) -> None:
        if self.erica.finalize_interval(now, len(self.abr_queue)):
            self._timer_gen += 1
            self.sim.at(now + self.erica.params.interval_ns,
                        self._interval_timer, self._timer_gen)

    def _interval_timer(self, gen) -> None:
        if gen != self._timer_gen:
            return
        self._finalize_interval(self.sim.now)

    # -- reverse path -----------------------------------------------------------------

    def stamp_brm(self, vc: int, er_in: float) -> float:
        """Explicit-rate stamp on a backward RM cell: min of carried and computed."""
        er = self.erica.explicit_rate(vc)
        return er if er < er_in else er_in
