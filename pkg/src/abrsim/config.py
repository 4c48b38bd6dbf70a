"""Scenario configuration and derived link quantities.

Scenarios are line-oriented `key = value` text with `#` comments and dotted
key names.  Every key has a default, so an empty document is a valid scenario
(15 sources, 1000 km links, 155.52 Mbps, queue-scaled explicit-rate scheme).
The topology is fixed: N sources feed the first switch, whose single output
port is the shared bottleneck; a second switch fans out to the destinations.
All three hops have the same length.
"""

import math
from dataclasses import dataclass, field

from .engine import NS_PER_MS, NS_PER_S, round_half_up

ATM_CELL_BITS = 424            # 53 bytes on the wire
ATM_CELL_PAYLOAD_BYTES = 48
ENCAPS_OVERHEAD_BYTES = 56     # 20 TCP + 20 IP + 8 LLC/SNAP + 8 AAL5
PROP_NS_PER_KM = 5_000         # fixed propagation speed: 5 us per km
REPORT_CELLS_PER_MS = 368      # convention used when quoting queues as RTT fractions

INF_CELLS = math.inf           # "infinite" buffer capacity


class ConfigError(ValueError):
    """Scenario document rejected; carries the offending key and line."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        loc = ""
        if key is not None:
            loc += f" (key '{key}'"
            loc += f", line {line})" if line is not None else ")"
        super().__init__(message + loc)
        self.key = key
        self.line = line


@dataclass
class VbrParams:
    """ON-OFF background source: ON for duty_cycle*period, OFF for the rest."""

    enabled: bool = False
    duty_cycle: float = 0.8
    period_ms: float = 10.0
    amplitude_mbps: float = 124.41
    start_ms: float = 2.0

    @property
    def period_ns(self) -> int:
        return round_half_up(self.period_ms * NS_PER_MS)

    @property
    def on_ns(self) -> int:
        return round_half_up(self.duty_cycle * self.period_ms * NS_PER_MS)

    @property
    def start_ns(self) -> int:
        return round_half_up(self.start_ms * NS_PER_MS)

    @property
    def gap_ns(self) -> int:
        """Cell spacing while ON."""
        return round_half_up(ATM_CELL_BITS * NS_PER_S / (self.amplitude_mbps * 1e6))


@dataclass
class TcpParams:
    mss_bytes: int = 512
    timer_granularity_ms: float = 100.0
    window_scale: int = 4
    initial_rto_ms: float = 1000.0

    @property
    def max_rcv_window_bytes(self) -> int:
        return (1 << self.window_scale) * 65536

    @property
    def granularity_ns(self) -> int:
        return round_half_up(self.timer_granularity_ms * NS_PER_MS)

    @property
    def initial_rto_ns(self) -> int:
        return round_half_up(self.initial_rto_ms * NS_PER_MS)


@dataclass
class EricaParams:
    """Switch measurement and allocation knobs.

    scheme "erica" targets utilization `u`; scheme "erica_plus" replaces the
    fixed target with a queue-length-dependent capacity factor (parameters
    t0_us, a, b, qdlf).  Measurement intervals end after interval_ms or after
    interval_cells ABR arrivals, whichever comes first.
    """

    scheme: str = "erica_plus"          # "erica" | "erica_plus"
    u: float = 0.9
    interval_ms: float = 1.0
    interval_cells: int = 100
    t0_us: float = 500.0
    a: float = 1.15
    b: float = 1.05
    qdlf: float = 0.5
    na_averaging: bool = False
    alpha_n: float = 0.9
    z_averaging: str = "none"           # "none" | "scheme1" | "scheme2"
    alpha_z: float = 0.2

    @property
    def interval_ns(self) -> int:
        return round_half_up(self.interval_ms * NS_PER_MS)

    @property
    def utilization(self) -> float:
        """Effective target utilization: fixed 1.0 for the queue-scaled scheme."""
        return 1.0 if self.scheme == "erica_plus" else self.u


@dataclass
class ScenarioConfig:
    n_sources: int = 15
    link_length_km: float = 1000.0
    link_rate_mbps: float = 155.52
    source_buffer_cells: float = INF_CELLS   # per VC; math.inf allowed
    switch_buffer_cells: float = INF_CELLS
    duration_s: float = 10.0
    trace_interval_ms: float = 0.1
    trace_per_vc: bool = False
    traffic_model: str = "tcp"               # "tcp" | "constant"
    icr_mbps: float | None = None            # None: link_rate / n_sources
    nrm: int = 32
    vbr: VbrParams = field(default_factory=VbrParams)
    tcp: TcpParams = field(default_factory=TcpParams)
    erica: EricaParams = field(default_factory=EricaParams)

    @property
    def duration_ns(self) -> int:
        return round_half_up(self.duration_s * NS_PER_S)

    @property
    def trace_interval_ns(self) -> int:
        return round_half_up(self.trace_interval_ms * NS_PER_MS)

    @property
    def link_rate_bps(self) -> float:
        return self.link_rate_mbps * 1e6

    @property
    def link_cell_rate(self) -> float:
        """Line rate in cells per second (exact, not the 368/ms reporting value)."""
        return self.link_rate_bps / ATM_CELL_BITS

    @property
    def cell_time_ns(self) -> int:
        return round_half_up(ATM_CELL_BITS * NS_PER_S / self.link_rate_bps)

    @property
    def icr_cells(self) -> float:
        if self.icr_mbps is not None:
            return self.icr_mbps * 1e6 / ATM_CELL_BITS
        return self.link_cell_rate / self.n_sources

    @property
    def pcr_cells(self) -> float:
        return self.link_cell_rate


@dataclass
class DerivedDelays:
    """Propagation-derived timing for the symmetric three-hop path."""

    one_way_prop_ns: int      # source to destination
    rtt_prop_ns: int
    feedback_delay_ns: int    # source <-> bottleneck switch, both ways
    rtt_cells: int            # RTT in exact cell-transmission units


def propagation_delay_ns(length_km: float) -> int:
    """One-way propagation for a single link: 5 us per km."""
    if length_km <= 0:
        raise ValueError(f"link length must be positive, got {length_km}")
    return round_half_up(length_km * PROP_NS_PER_KM)


def feedback_delay_ns(config: ScenarioConfig) -> int:
    """Rate feedback latency: twice the source-to-bottleneck one-way delay."""
    return 2 * propagation_delay_ns(config.link_length_km)


def derive_delays(config: ScenarioConfig) -> DerivedDelays:
    hop = propagation_delay_ns(config.link_length_km)
    one_way = 3 * hop
    rtt = 2 * one_way
    rtt_cells = round_half_up(rtt * 1e-9 * config.link_cell_rate)
    return DerivedDelays(one_way, rtt, 2 * hop, rtt_cells)


def rtt_report_cells(config: ScenarioConfig) -> int:
    """RTT in cells under the 368 cells/ms reporting convention."""
    rtt_ms = derive_delays(config).rtt_prop_ns / NS_PER_MS
    return round_half_up(rtt_ms * REPORT_CELLS_PER_MS)


def max_throughput_bound_mbps(config: ScenarioConfig) -> float:
    """Upper bound on aggregate TCP goodput for a configuration.

    Link rate, scaled by the target utilization, the 48/53 cell payload
    fraction, the MSS/(MSS+56) header fraction, and the (nrm-1)/nrm in-rate
    management-cell fraction.
    """
    mss = config.tcp.mss_bytes
    return (
        config.link_rate_mbps
        * config.erica.utilization
        * (ATM_CELL_PAYLOAD_BYTES / 53.0)
        * (mss / (mss + ENCAPS_OVERHEAD_BYTES))
        * ((config.nrm - 1) / config.nrm)
    )


# ---------------------------------------------------------------------------
# Scenario document parsing


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("on", "true", "yes", "1"):
        return True
    if low in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean (on/off), got '{raw}'")


def _parse_cells(raw: str) -> float:
    if raw.lower() in ("inf", "infinite"):
        return INF_CELLS
    n = int(raw)
    if n < 1:
        raise ValueError(f"buffer capacity must be >= 1 or 'inf', got {raw}")
    return float(n)


def _int_min(minimum: int):
    def parse(raw: str) -> int:
        n = int(raw)
        if n < minimum:
            raise ValueError(f"must be an integer >= {minimum}, got {raw}")
        return n

    return parse


def _float_positive(raw: str) -> float:
    x = float(raw)
    if x <= 0:
        raise ValueError(f"must be > 0, got {raw}")
    return x


def _float_nonneg(raw: str) -> float:
    x = float(raw)
    if x < 0:
        raise ValueError(f"must be >= 0, got {raw}")
    return x


def _fraction_half_open(raw: str) -> float:
    x = float(raw)
    if not 0.0 < x <= 1.0:
        raise ValueError(f"must be in (0, 1], got {raw}")
    return x


def _fraction_open(raw: str) -> float:
    x = float(raw)
    if not 0.0 < x < 1.0:
        raise ValueError(f"must be in (0, 1), got {raw}")
    return x


def _float_above_one(raw: str) -> float:
    x = float(raw)
    if x <= 1.0:
        raise ValueError(f"must be > 1, got {raw}")
    return x


def _choice(*options: str):
    def parse(raw: str) -> str:
        low = raw.lower()
        if low not in options:
            raise ValueError(f"must be one of {options}, got '{raw}'")
        return low

    return parse


def _set(section: str | None, attr: str, parse):
    def apply(cfg: ScenarioConfig, raw: str) -> None:
        target = cfg if section is None else getattr(cfg, section)
        setattr(target, attr, parse(raw))

    return apply


_KEY_TABLE = {
    "n_sources": _set(None, "n_sources", _int_min(1)),
    "link_length_km": _set(None, "link_length_km", _float_positive),
    "link_rate_mbps": _set(None, "link_rate_mbps", _float_positive),
    "source_buffer_cells": _set(None, "source_buffer_cells", _parse_cells),
    "abr.source_buffer_cells": _set(None, "source_buffer_cells", _parse_cells),
    "switch.buffer_cells": _set(None, "switch_buffer_cells", _parse_cells),
    "duration_s": _set(None, "duration_s", _float_positive),
    "trace_interval_ms": _set(None, "trace_interval_ms", _float_positive),
    "trace_per_vc": _set(None, "trace_per_vc", _parse_bool),
    "traffic_model": _set(None, "traffic_model", _choice("tcp", "constant")),
    "abr.icr_mbps": _set(None, "icr_mbps", _float_positive),
    "abr.nrm": _set(None, "nrm", _int_min(2)),
    "vbr.enabled": _set("vbr", "enabled", _parse_bool),
    "vbr.duty_cycle": _set("vbr", "duty_cycle", _fraction_half_open),
    "vbr.period_ms": _set("vbr", "period_ms", _float_positive),
    "vbr.amplitude_mbps": _set("vbr", "amplitude_mbps", _float_positive),
    "vbr.start_ms": _set("vbr", "start_ms", _float_nonneg),
    "tcp.mss_bytes": _set("tcp", "mss_bytes", _int_min(1)),
    "tcp.timer_granularity_ms": _set("tcp", "timer_granularity_ms", _float_positive),
    "tcp.window_scale": _set("tcp", "window_scale", _int_min(0)),
    "tcp.initial_rto_ms": _set("tcp", "initial_rto_ms", _float_positive),
    "erica.scheme": _set("erica", "scheme", _choice("erica", "erica_plus")),
    "erica.u": _set("erica", "u", _fraction_half_open),
    "erica.interval_ms": _set("erica", "interval_ms", _float_positive),
    "erica.interval_cells": _set("erica", "interval_cells", _int_min(1)),
    "erica.t0_us": _set("erica", "t0_us", _float_positive),
    "erica.a": _set("erica", "a", _float_above_one),
    "erica.b": _set("erica", "b", _float_above_one),
    "erica.qdlf": _set("erica", "qdlf", _fraction_open),
    "erica.na_averaging": _set("erica", "na_averaging", _parse_bool),
    "erica.alpha_n": _set("erica", "alpha_n", _fraction_open),
    "erica.alpha_z": _set("erica", "alpha_z", _fraction_half_open),
    "erica.z_averaging": _set("erica", "z_averaging", _choice("none", "scheme1", "scheme2")),
}


def parse_scenario(text: str) -> ScenarioConfig:
    """Parse a scenario document; unknown keys and out-of-range values raise
    ConfigError naming the key and line number."""
    cfg = ScenarioConfig()
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", key=line, line=line_no)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        apply = _KEY_TABLE.get(key)
        if apply is None:
            raise ConfigError("unknown configuration key", key=key, line=line_no)
        if not value:
            raise ConfigError("empty value", key=key, line=line_no)
        try:
            apply(cfg, value)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc), key=key, line=line_no) from None
    _validate(cfg)
    return cfg


def load_scenario(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def _validate(cfg: ScenarioConfig) -> None:
    if cfg.vbr.enabled and cfg.vbr.amplitude_mbps > cfg.link_rate_mbps:
        raise ConfigError(
            f"VBR amplitude {cfg.vbr.amplitude_mbps} Mbps exceeds the link rate",
            key="vbr.amplitude_mbps",
        )
    if cfg.tcp.mss_bytes > cfg.tcp.max_rcv_window_bytes:
        raise ConfigError("MSS larger than the receiver window", key="tcp.mss_bytes")
