"""Scenario assembly: sources, hosts, the bottleneck port, and path latencies.

The topology has one congestible queue: the shared output port of the first
switch.  Access links (one VC each, shaped at or below line rate) and the
links past the bottleneck (fan-out, one VC each) can never congest, so they
are modeled as fixed store-and-forward latencies.  Receiver-side bookkeeping
runs when a cell finishes transmission at the bottleneck; every downstream
effect (ACKs, backward RM cells) is scheduled at the true arrival time, so
the shift is invisible to the control loops.
"""

from .abr import KIND_DATA, FORWARD, AbrSource, FrameReassembler, RmCell, turnaround
from .config import ScenarioConfig, derive_delays
from .engine import Simulator
from .erica import EricaEngine
from .switch import BottleneckPort
from .tcp import TcpReceiver, TcpSender, segment_to_cells
from .vbr import VbrSource, vbr_active


class Simulation:
    """One fully wired scenario run."""

    def __init__(self, config: ScenarioConfig, icr_cells_per_vc: list[float] | None = None):
        self.config = config
        self.sim = Simulator()
        self.delays = derive_delays(config)

        n = config.n_sources
        cell_t = config.cell_time_ns
        hop = self.delays.one_way_prop_ns // 3
        self.d_src_to_port = cell_t + hop
        self.d_port_to_dest = hop + cell_t + hop
        self.d_dest_to_port = hop + cell_t + hop + cell_t   # reverse, uncongested
        self.d_port_to_src = hop + cell_t
        # ACKs ride the uncongested reverse path end to end
        self.d_ack = 3 * hop + 3 * cell_t

        self.cells_per_segment = segment_to_cells(config.tcp.mss_bytes)
        self.erica = EricaEngine(config.erica, config.link_cell_rate, n)
        self.port = BottleneckPort(
            self.sim, cell_t, config.switch_buffer_cells, self.erica, self._on_departure
        )

        pcr = config.pcr_cells
        if icr_cells_per_vc is None:
            icr_cells_per_vc = [config.icr_cells] * n
        constant = config.traffic_model == "constant"
        self.sources = [
            AbrSource(
                self.sim, vc, self.port, self.d_src_to_port, icr_cells_per_vc[vc],
                pcr, config.source_buffer_cells, config.nrm, self.cells_per_segment,
                constant_demand=constant,
            )
            for vc in range(n)
        ]
        self.reassemblers = [FrameReassembler(self.cells_per_segment) for _ in range(n)]
        self.delivered_cells = [0] * n

        if constant:
            self.senders: list[TcpSender] = []
            self.receivers: list[TcpReceiver] = []
        else:
            self.senders = [
                TcpSender(self.sim, config.tcp, self._make_transmit(vc)) for vc in range(n)
            ]
            self.receivers = [TcpReceiver(config.tcp.mss_bytes) for _ in range(n)]

        self.vbr_source = VbrSource(self.sim, config.vbr, self.port) if config.vbr.enabled else None
        self.frm_delivered = 0
        self.trace_rows: list[tuple] = []
        self._trace_interval = config.trace_interval_ns
        self._trace_per_vc = config.trace_per_vc

    def _make_transmit(self, vc: int):
        source = self.sources[vc]
        cells = self.cells_per_segment

        def transmit(seq: int) -> None:
            source.enqueue_segment(seq, cells)

        return transmit

    # -- cell departure from the bottleneck --------------------------------------

    def _on_departure(self, cell, now: int) -> None:
        vc = cell[1]
        if cell[0] == KIND_DATA:
            self.delivered_cells[vc] += 1
            seg = self.reassemblers[vc].on_cell(cell[2], cell[3])
            if seg is not None and self.receivers:
                ack = self.receivers[vc].on_segment(seg)
                self.sim.at(now + self.d_port_to_dest + self.d_ack,
                            self.senders[vc].on_ack, ack)
        else:
            self.frm_delivered += 1
            rm = turnaround(RmCell(FORWARD, er=cell[3], ccr=cell[2]))
            self.sim.at(now + self.d_port_to_dest + self.d_dest_to_port,
                        self._stamp_brm, (vc, rm.er))

    def _stamp_brm(self, arg) -> None:
        vc, er_in = arg
        er = self.port.stamp_brm(vc, er_in)
        self.sim.at(self.sim.now + self.d_port_to_src, self.sources[vc].on_brm, er)

    # -- trace -------------------------------------------------------------------

    def _trace(self, _arg) -> None:
        now = self.sim.now
        on = self.vbr_source is not None and vbr_active(now, self.config.vbr)
        if self._trace_per_vc:
            row = (now, len(self.port.abr_queue), on,
                   tuple(s.acr for s in self.sources),
                   tuple(s.queue_cells for s in self.sources))
        else:
            row = (now, len(self.port.abr_queue), on)
        self.trace_rows.append(row)
        nxt = now + self._trace_interval
        if nxt <= self.config.duration_ns:
            self.sim.at(nxt, self._trace)

    # -- run -----------------------------------------------------------------------

    def run(self) -> None:
        self.port.start()
        if self.vbr_source is not None:
            self.vbr_source.start()
        for source in self.sources:
            source.start()
        for sender in self.senders:
            sender.start()
        self.sim.at(0, self._trace)
        self.sim.run_until(self.config.duration_ns)

    # -- accounting ---------------------------------------------------------------

    def goodput_mbps(self) -> float:
        if not self.receivers:
            return 0.0
        total_bytes = sum(r.delivered_bytes for r in self.receivers)
        return total_bytes * 8 / self.config.duration_s / 1e6

    def source_conservation(self) -> list[tuple[int, int, int, int]]:
        """(enqueued, departed, queued, dropped) per VC; enqueued = rest."""
        return [
            (s.cells_enqueued, s.data_cells_sent, s.queue_cells, s.cells_dropped)
            for s in self.sources
        ]

    def port_conservation(self) -> tuple[int, int, int, int]:
        """(arrived, departed, queued-or-in-service, dropped) for the ABR class."""
        p = self.port
        return (p.arrived_abr, p.departed_abr, len(p.abr_queue) + p.abr_in_service,
                p.dropped_abr)
