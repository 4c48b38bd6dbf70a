"""TCP sender and receiver state machines, plus the cell encapsulation math.

The senders model bulk transfer of an infinite file: slow start, congestion
avoidance, and coarse-grained timeout with go-back-N retransmission.  Fast
retransmit/recovery and delayed ACKs are deliberately absent; the only loss
signal is the retransmission timer, quantized to the configured granularity.
Connections are pre-established: data flows from t=0.
"""

from .config import ENCAPS_OVERHEAD_BYTES, ATM_CELL_PAYLOAD_BYTES, TcpParams
from .engine import NS_PER_S

MAX_RTO_NS = 64 * NS_PER_S


def segment_to_cells(payload_bytes: int) -> int:
    """Cells needed for one segment: 56 header bytes, 48 payload bytes per cell."""
    return -(-(payload_bytes + ENCAPS_OVERHEAD_BYTES) // ATM_CELL_PAYLOAD_BYTES)


def window_cells(window_bytes: int, mss_bytes: int) -> int:
    """Cells occupied by a window's worth of MSS segments."""
    return (window_bytes // mss_bytes) * segment_to_cells(mss_bytes)


def rto_from_estimates(srtt_ns: int, rttvar_ns: int, granularity_ns: int) -> int:
    """srtt + 4*rttvar, rounded up to a timer tick, clamped to [2 ticks, 64 s]."""
    raw = srtt_ns + 4 * rttvar_ns
    ticks = -(-raw // granularity_ns)
    rto = ticks * granularity_ns
    floor = 2 * granularity_ns
    if rto < floor:
        rto = floor
    return rto if rto < MAX_RTO_NS else MAX_RTO_NS


class TcpReceiver:
    """Cumulative-ACK receiver with an out-of-order store.

    Segments are fixed at MSS bytes, so the store keeps starting sequence
    numbers.  The application consumes delivered data immediately and the
    advertised window stays constant.
    """

    __slots__ = ("mss", "rcv_nxt", "out_of_order", "delivered_bytes", "duplicates")

    def __init__(self, mss_bytes: int):
        self.mss = mss_bytes
        self.rcv_nxt = 0
        self.out_of_order: set[int] = set()
        self.delivered_bytes = 0
        self.duplicates = 0

    def on_segment(self, seq: int) -> int:
        """Process one MSS data segment; returns the ACK number to emit."""
        mss = self.mss
        if seq == self.rcv_nxt:
            nxt = seq + mss
            store = self.out_of_order
            while nxt in store:
                store.remove(nxt)
                nxt += mss
            self.delivered_bytes += nxt - self.rcv_nxt
            self.rcv_nxt = nxt
        elif seq > self.rcv_nxt:
            self.out_of_order.add(seq)
        else:
            self.duplicates += 1
        return self.rcv_nxt


class TcpSender:
    """One bulk-transfer connection feeding an ABR source queue.

    `transmit(seq)` hands a single MSS segment to the encapsulation layer.
    The retransmission timer is an engine event, cancelled and re-armed on
    each new ACK; samples for the RTT estimator are taken only from segments
    that were never retransmitted.
    """

    def __init__(self, sim, params: TcpParams, transmit):
        self.sim = sim
        self.params = params
        self.transmit = transmit
        self.mss = params.mss_bytes
        self.rcv_window = params.max_rcv_window_bytes

        self.snd_una = 0
        self.snd_nxt = 0
        self.snd_max = 0                  # highest sequence ever transmitted
        self.cwnd = float(self.mss)
        self.ssthresh = float(self.rcv_window)
        self.srtt = 0
        self.rttvar = 0
        self.rto = params.initial_rto_ns
        self.rtt_samples = 0
        self.timeouts = 0
        self.bytes_retransmitted = 0

        self._timing = None               # (sequence end, send time) of the timed segment
        self._timer_handle = None

    # -- transmission -------------------------------------------------------

    def start(self) -> None:
        self.send_pending()

    def usable_window(self) -> int:
        window = self.cwnd if self.cwnd < self.rcv_window else float(self.rcv_window)
        return int(window) - (self.snd_nxt - self.snd_una)

    def send_pending(self) -> None:
        """Emit as many MSS segments as the usable window allows."""
        mss = self.mss
        now = self.sim.now
        sent = False
        while self.usable_window() >= mss:
            seq = self.snd_nxt
            self.snd_nxt = seq + mss
            if seq >= self.snd_max:
                self.snd_max = self.snd_nxt
                if self._timing is None:
                    self._timing = (seq + mss, now)
            else:
                self.bytes_retransmitted += mss
            self.transmit(seq)
            sent = True
        if sent and self._timer_handle is None:
            self._arm_timer(now + self.rto)

    # -- ACK path -------------------------------------------------------------

    def on_ack(self, ack_seq: int) -> None:
        if ack_seq <= self.snd_una:
            return                        # duplicate or stale: no fast retransmit
        now = self.sim.now
        timing = self._timing
        if timing is not None and ack_seq >= timing[0]:
            self._take_rtt_sample(now - timing[1])
            self._timing = None
        mss = self.mss
        if self.cwnd < self.ssthresh:
            self.cwnd += mss              # slow start: one MSS per new ACK
        else:
            self.cwnd += mss * mss / self.cwnd
        if self.cwnd > self.rcv_window:
            self.cwnd = float(self.rcv_window)
        self.snd_una = ack_seq
        if self.snd_nxt < ack_seq:
            self.snd_nxt = ack_seq       # acked sequence space is never resent
        self._cancel_timer()
        if self.snd_una < self.snd_nxt:
            self._arm_timer(now + self.rto)
        self.send_pending()

    def _take_rtt_sample(self, sample_ns: int) -> None:
        if self.rtt_samples == 0:
            self.srtt = sample_ns
            self.rttvar = sample_ns // 2
        else:
            err = sample_ns - self.srtt
            self.rttvar += (abs(err) - self.rttvar) // 4
            self.srtt += err // 8
        self.rtt_samples += 1
        self.rto = rto_from_estimates(self.srtt, self.rttvar, self.params.granularity_ns)

    # -- timer ------------------------------------------------------------------

    def _arm_timer(self, deadline: int) -> None:
        self._timer_handle = self.sim.at(deadline, self._on_timer)

    def _cancel_timer(self) -> None:
        if self._timer_handle is not None:
            self.sim.cancel(self._timer_handle)
            self._timer_handle = None

    def _on_timer(self, _arg) -> None:
        self._timer_handle = None
        if self.snd_una >= self.snd_nxt:
            return
        self.on_timeout()

    def on_timeout(self) -> None:
        """Coarse timeout: halve ssthresh, restart from one MSS, go back N."""
        mss = self.mss
        self.timeouts += 1
        half = self.cwnd / 2.0
        self.ssthresh = half if half > 2 * mss else float(2 * mss)
        self.cwnd = float(mss)
        self.rto = min(self.rto * 2, MAX_RTO_NS)
        self.snd_nxt = self.snd_una
        self._timing = None               # Karn: no samples across a retransmission
        self._arm_timer(self.sim.now + self.rto)
        self.send_pending()
