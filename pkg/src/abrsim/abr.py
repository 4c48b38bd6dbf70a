"""ABR end-system behavior.

Each VC owns a finite source queue fed by TCP encapsulation and drained by a
shaper at the allowed cell rate (ACR).  Every nrm-th in-rate cell is a forward
resource-management cell carrying the current rate; the destination turns RM
cells around unchanged, and backward RM cells deliver the explicit rate that
becomes the new ACR.  Cells are lightweight tuples:

    (KIND_DATA, vc, segment_seq, cell_index)
    (KIND_FRM,  vc, ccr, er)
"""

from collections import deque
from dataclasses import dataclass

KIND_DATA = 0
KIND_FRM = 1

FORWARD = "forward"
BACKWARD = "backward"

# ACR is never driven below this fraction of the line rate, so a throttled VC
# still emits the RM cells that could raise its rate again.
ACR_FLOOR_FRACTION = 1e-4


@dataclass
class RmCell:
    """Resource-management cell fields that matter to rate allocation."""

    direction: str
    er: float       # explicit rate, cells/s; only ever reduced in transit
    ccr: float      # source rate declared at emission


def turnaround(rm: RmCell) -> RmCell:
    """Destination behavior: reflect a forward RM cell onto the reverse path."""
    if rm.direction != FORWARD:
        raise ValueError("only forward RM cells are turned around")
    return RmCell(BACKWARD, rm.er, rm.ccr)


class FrameReassembler:
    """Per-VC frame assembly: collect the fixed number of cells per segment,
    discard any frame whose cells do not arrive as a complete run."""

    __slots__ = ("cells_per_frame", "cur_seg", "count", "cells_received",
                 "frames_completed", "frames_discarded")

    def __init__(self, cells_per_frame: int):
        self.cells_per_frame = cells_per_frame
        self.cur_seg = None
        self.count = 0
        self.cells_received = 0
        self.frames_completed = 0
        self.frames_discarded = 0

    def on_cell(self, seg, idx: int):
        """Returns the segment sequence when its final cell completes a frame."""
        self.cells_received += 1
        if idx == 0:
            if self.cur_seg is not None:
                self.frames_discarded += 1
            self.cur_seg = seg
            self.count = 1
        elif seg == self.cur_seg:
            self.count += 1
        else:
            return None   # continuation of a frame whose start never arrived
        if self.count == self.cells_per_frame:
            self.cur_seg = None
            self.count = 0
            self.frames_completed += 1
            return seg
        return None


class AbrSource:
    """Source queue plus rate shaper for one VC.

    The queue stores (segment, accepted_cells, emitted_so_far) entries rather
    than individual cells; tail drop truncates the accepted count.  With
    constant_demand set, the queue is ignored and data cells are synthesized
    forever (used to exercise the switch scheme without TCP).
    """

    __slots__ = (
        "sim", "vc", "port", "arrival_delay_ns", "pcr", "acr", "acr_floor",
        "capacity", "nrm", "cells_per_frame", "constant_demand",
        "queue", "queue_cells", "cells_since_frm", "spacing_ns",
        "next_send", "last_emit", "_scheduled", "_gen",
        "cells_enqueued", "cells_dropped", "data_cells_sent", "frm_cells_sent",
        "max_queue_seen", "_synth_seg", "_synth_idx",
    )

    def __init__(self, sim, vc: int, port, arrival_delay_ns: int, icr: float,
                 pcr: float, capacity: float, nrm: int, cells_per_frame: int,
                 constant_demand: bool = False):
        self.sim = sim
        self.vc = vc
        self.port = port
        self.arrival_delay_ns = arrival_delay_ns
        self.pcr = pcr
        self.acr = min(icr, pcr)
        self.acr_floor = pcr * ACR_FLOOR_FRACTION
        self.capacity = capacity
        self.nrm = nrm
        self.cells_per_frame = cells_per_frame
        self.constant_demand = constant_demand

        self.queue = deque()
        self.queue_cells = 0
        self.cells_since_frm = nrm - 1    # the first in-rate cell is an RM cell
        self.spacing_ns = self._spacing(self.acr)
        self.next_send = 0
        self.last_emit = None
        self._scheduled = False
        self._gen = 0

        self.cells_enqueued = 0
        self.cells_dropped = 0
        self.data_cells_sent = 0
        self.frm_cells_sent = 0
        self.max_queue_seen = 0
        self._synth_seg = 0
        self._synth_idx = 0

    @staticmethod
    def _spacing(acr: float) -> int:
        ns = int(1e9 / acr + 0.5)
        return ns if ns > 0 else 1

    def start(self) -> None:
        if self.constant_demand:
            self._arm(0)

    # -- enqueue from the transport ------------------------------------------

    def enqueue_segment(self, seg_seq: int, n_cells: int) -> int:
        """Append a segment's cells, tail-dropping past capacity; returns accepted."""
        free = self.capacity - self.queue_cells
        take = n_cells if n_cells <= free else int(free)
        if take > 0:
            self.queue.append([seg_seq, take, 0])
            self.queue_cells += take
            self.cells_enqueued += take
            if self.queue_cells > self.max_queue_seen:
                self.max_queue_seen = self.queue_cells
            if not self._scheduled:
                now = self.sim.now
                self._arm(now if now > self.next_send else self.next_send)
        dropped = n_cells - take
        self.cells_dropped += dropped
        return take

    # -- shaper ----------------------------------------------------------------

    def _arm(self, when: int) -> None:
        self._scheduled = True
        self.sim.at(when, self._fire, self._gen)

    def _fire(self, gen) -> None:
        if gen != self._gen:
            return
        self._scheduled = False
        now = self.sim.now
        if now < self.next_send:
            self._arm(self.next_send)
            return

        if self.cells_since_frm >= self.nrm - 1:
            cell = (KIND_FRM, self.vc, self.acr, self.pcr)
            self.cells_since_frm = 0
            self.frm_cells_sent += 1
        elif self.constant_demand:
            cell = (KIND_DATA, self.vc, self._synth_seg, self._synth_idx)
            self._synth_idx += 1
            if self._synth_idx == self.cells_per_frame:
                self._synth_idx = 0
                self._synth_seg += 1
            self.cells_since_frm += 1
            self.data_cells_sent += 1
        elif self.queue:
            entry = self.queue[0]
            idx = entry[2]
            entry[2] = idx + 1
            if entry[2] == entry[1]:
                self.queue.popleft()
            cell = (KIND_DATA, self.vc, entry[0], idx)
            self.queue_cells -= 1
            self.cells_since_frm += 1
            self.data_cells_sent += 1
        else:
            return   # idle until the next enqueue

        self.last_emit = now
        self.next_send = now + self.spacing_ns
        self.sim.at(now + self.arrival_delay_ns, self.port.on_abr_cell, cell)
        if self.constant_demand or self.queue or self.cells_since_frm >= self.nrm - 1:
            self._arm(self.next_send)

    # -- feedback ----------------------------------------------------------------

    def on_brm(self, er: float) -> float:
        """Adopt the explicit rate from a backward RM cell; returns the new ACR."""
        acr = er if er < self.pcr else self.pcr
        if acr < self.acr_floor:
            acr = self.acr_floor
        if acr == self.acr:
            return acr
        self.acr = acr
        self.spacing_ns = self._spacing(acr)
        if self.last_emit is not None:
            self.next_send = self.last_emit + self.spacing_ns
        else:
            self.next_send = 0
        if self._scheduled:
            self._gen += 1
            now = self.sim.now
            self._arm(now if now > self.next_send else self.next_send)
        return acr
