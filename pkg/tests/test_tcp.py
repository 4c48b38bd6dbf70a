from abrsim.config import TcpParams
from abrsim.engine import NS_PER_MS, NS_PER_S, Simulator
from abrsim.tcp import (
    MAX_RTO_NS,
    TcpReceiver,
    TcpSender,
    rto_from_estimates,
    segment_to_cells,
    window_cells,
)


def brute_force_cells(payload_bytes: int) -> int:
    """Independent oracle: pack header+payload bytes into 48-byte cells."""
    remaining = payload_bytes + 20 + 20 + 8 + 8
    cells = 0
    while remaining > 0:
        remaining -= 48
        cells += 1
    return cells


def test_segment_to_cells_mss_512():
    assert segment_to_cells(512) == 12


def test_segment_to_cells_pure_ack():
    assert segment_to_cells(0) == 2


def test_window_in_cells():
    # 1024 kB receiver window as 2048 segments of 12 cells
    assert window_cells(1_048_576, 512) == 24576


def test_encapsulation_against_brute_force():
    for payload in range(0, 10_001):
        assert segment_to_cells(payload) == brute_force_cells(payload)


def test_rto_min_clamp():
    g = 100 * NS_PER_MS
    # srtt 30 ms, rttvar 5 ms: 50 ms ceils to one tick, then min-clamps to 2 ticks
    assert rto_from_estimates(30 * NS_PER_MS, 5 * NS_PER_MS, g) == 200 * NS_PER_MS


def test_rto_ceiling_to_tick():
    g = 100 * NS_PER_MS
    assert rto_from_estimates(350 * NS_PER_MS, 50 * NS_PER_MS, g) == 600 * NS_PER_MS


def test_rto_exact_tick_boundary():
    g = 100 * NS_PER_MS
    assert rto_from_estimates(120 * NS_PER_MS, 20 * NS_PER_MS, g) == 200 * NS_PER_MS


def test_rto_max_clamp():
    g = 100 * NS_PER_MS
    assert rto_from_estimates(100 * NS_PER_S, 0, g) == MAX_RTO_NS


# -- sender ------------------------------------------------------------------


def make_sender(sim=None):
    sim = sim or Simulator()
    sent = []
    sender = TcpSender(sim, TcpParams(), sent.append)
    return sim, sender, sent


def test_initial_send_is_one_segment():
    sim, sender, sent = make_sender()
    sender.start()
    assert sent == [0]
    assert sender.snd_nxt == 512


def test_no_send_when_window_exhausted():
    sim, sender, sent = make_sender()
    sender.cwnd = 512.0
    sender.start()
    sent.clear()
    sender.send_pending()
    assert sent == []


def test_window_arithmetic_three_more_segments():
    sim, sender, sent = make_sender()
    sender.start()                 # one MSS in flight
    sender.cwnd = 4 * 512.0
    sent.clear()
    sender.send_pending()
    assert sent == [512, 1024, 1536]


def test_slow_start_increment_per_ack():
    sim, sender, sent = make_sender()
    sender.cwnd = 2 * 512.0
    sender.ssthresh = 100 * 512.0
    sender.start()
    sender.on_ack(512)
    assert sender.cwnd == 3 * 512.0


def test_congestion_avoidance_increment():
    sim, sender, sent = make_sender()
    mss = 512
    sender.cwnd = 100.0 * mss
    sender.ssthresh = 100.0 * mss
    sender.start()
    sender.on_ack(512)
    assert sender.cwnd == 100.0 * mss + mss / 100.0


def test_stale_ack_ignored():
    sim, sender, sent = make_sender()
    sender.start()
    sender.on_ack(512)
    cwnd = sender.cwnd
    una = sender.snd_una
    sender.on_ack(512)   # duplicate
    assert sender.cwnd == cwnd and sender.snd_una == una


def test_cwnd_capped_at_receiver_window():
    sim, sender, sent = make_sender()
    cap = sender.rcv_window
    sender.cwnd = float(cap - 100)
    sender.ssthresh = 1.0   # force congestion avoidance... still capped
    sender.cwnd = float(cap)
    sender.start()
    sender.on_ack(512)
    assert sender.cwnd <= cap


def test_timeout_halves_ssthresh_and_resets_window():
    sim, sender, sent = make_sender()
    sender.cwnd = 24 * 512.0
    sender.start()
    sent.clear()
    sender.on_timeout()
    assert sender.ssthresh == 12 * 512.0
    assert sender.cwnd == 512.0
    assert sender.snd_nxt == 512   # go-back-N resumed from snd_una and resent one
    assert sent == [0]


def test_timeout_ssthresh_floor():
    sim, sender, sent = make_sender()
    sender.start()
    assert sender.cwnd == 512.0
    sender.on_timeout()
    assert sender.ssthresh == 2 * 512.0


def test_timeout_doubles_rto():
    sim, sender, sent = make_sender()
    sender.rto = 200 * NS_PER_MS
    sender.start()
    sender.on_timeout()
    assert sender.rto == 400 * NS_PER_MS


def test_rto_timer_fires_and_retransmits():
    sim, sender, sent = make_sender()
    sender.start()
    assert sent == [0]
    sim.run_until(sender.params.initial_rto_ns + 1)
    assert sender.timeouts == 1
    assert sent == [0, 0]


def test_timer_never_fires_without_loss():
    # lossless echo: every segment is ACKed 5 ms after transmission
    sim = Simulator()
    box = {}

    def transmit(seq):
        sim.at(sim.now + 5 * NS_PER_MS, box["sender"].on_ack, seq + 512)

    box["sender"] = TcpSender(sim, TcpParams(), transmit)
    box["sender"].start()
    sim.run_until(2 * NS_PER_S)
    assert box["sender"].timeouts == 0
    assert box["sender"].cwnd == float(box["sender"].rcv_window)


def test_rtt_sample_untouched_by_retransmission():
    sim, sender, sent = make_sender()
    sender.start()
    sender.on_timeout()            # Karn: pending sample invalidated
    samples_before = sender.rtt_samples
    sender.on_ack(512)
    assert sender.rtt_samples == samples_before


# -- receiver -------------------------------------------------------------------


def test_in_order_segment_advances_and_acks():
    r = TcpReceiver(512)
    assert r.on_segment(0) == 512
    assert r.rcv_nxt == 512
    assert r.delivered_bytes == 512


def test_gap_segment_stored_with_duplicate_ack():
    r = TcpReceiver(512)
    r.on_segment(0)
    assert r.on_segment(1024) == 512      # duplicate ACK for the hole
    assert 1024 in r.out_of_order
    # filling the hole absorbs the stored range
    assert r.on_segment(512) == 1536
    assert r.out_of_order == set()


def test_duplicate_segment_reacked_without_advance():
    r = TcpReceiver(512)
    r.on_segment(0)
    assert r.on_segment(0) == 512
    assert r.delivered_bytes == 512
    assert r.duplicates == 1


def test_delivered_stream_is_gapless_prefix():
    r = TcpReceiver(512)
    # deliver 2,1,0,4,3: delivery must follow cumulative order only
    r.on_segment(1024)
    r.on_segment(512)
    assert r.rcv_nxt == 0
    r.on_segment(0)
    assert r.rcv_nxt == 1536
    r.on_segment(2048)
    r.on_segment(1536)
    assert r.rcv_nxt == 2560
    assert r.delivered_bytes == 2560
