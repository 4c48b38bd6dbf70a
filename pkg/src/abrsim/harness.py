"""Scenario execution and the canned experiment suites.

`run_scenario` produces deterministic RunMetrics for one configuration.
`reproduce_table` runs the pre-registered experiment rows (source-buffer
sweep, VBR duty-cycle/period matrix, feedback-delay sweep, measurement
smoothing) and checks each against its expected outcome.  Queue divergence is
classified from the trace: per-period queue maxima over the final half of the
run must show both a positive trend and an absolute level beyond a multiple
of the round-trip time to be called divergent.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .config import (
    ScenarioConfig,
    EricaParams,
    VbrParams,
    feedback_delay_ns,
    max_throughput_bound_mbps,
    rtt_report_cells,
)
from .engine import NS_PER_MS
from .network import Simulation
from .tcp import window_cells

CONVERGENT = "CONVERGENT"
DIVERGENT = "DIVERGENT"
UNKNOWN = "UNKNOWN"

# Classification thresholds (harness policy, not part of the switch scheme).
# Measured convergent rows sit at <= 0.011% of RTT per period of growth and
# divergent rows at >= 0.7%, so 0.1% separates the clusters by ~8x each way.
DIVERGENCE_SLOPE_RTT_FRACTION = 0.001  # growth per period, as a fraction of RTT cells
DIVERGENCE_LEVEL_RTT_MULTIPLE = 3.0    # final per-period maximum must exceed this
MIN_PERIODS_FOR_CLASSIFICATION = 20
NO_VBR_PSEUDO_PERIOD_NS = 100 * NS_PER_MS

METRICS_HEADER = (
    "scenario_id,n_sources,source_buffer_cells,vbr_d,vbr_p_ms,feedback_delay_ms,"
    "scheme,max_source_queue_cells,max_switch_queue_cells,max_switch_queue_rtt_frac,"
    "goodput_mbps,drops_source,drops_switch,divergence"
)


@dataclass
class RunMetrics:
    scenario_id: str
    n_sources: int
    source_buffer_cells: float
    vbr_d: float
    vbr_p_ms: float
    feedback_delay_ms: float
    scheme: str
    per_vc_max_source_queue: list[int]
    max_source_queue_cells: int
    max_switch_queue_cells: int
    max_switch_queue_rtt_frac: float
    goodput_mbps: float
    drops_source: int
    drops_switch: int
    divergence: str
    steady_state_switch_queue: float
    throughput_bound_mbps: float
    duration_s: float
    rtt_report_cells: int
    timeouts: int
    # conservation counters (not part of the CSV row)
    per_vc_source_counts: list[tuple[int, int, int, int]] = field(default_factory=list)
    port_counts: tuple[int, int, int, int] = (0, 0, 0, 0)
    vbr_counts: tuple[int, int] = (0, 0)
    delivered_data_cells: int = 0
    frm_delivered: int = 0

    def csv_row(self) -> str:
        buf = "inf" if math.isinf(self.source_buffer_cells) else str(int(self.source_buffer_cells))
        return ",".join(
            (
                self.scenario_id,
                str(self.n_sources),
                buf,
                f"{self.vbr_d:g}",
                f"{self.vbr_p_ms:g}",
                f"{self.feedback_delay_ms:g}",
                self.scheme,
                str(self.max_source_queue_cells),
                str(self.max_switch_queue_cells),
                f"{self.max_switch_queue_rtt_frac:.4f}",
                f"{self.goodput_mbps:.4f}",
                str(self.drops_source),
                str(self.drops_switch),
                self.divergence,
            )
        )


def _lsq_slope(ys: list) -> float:
    n = len(ys)
    x_bar = (n - 1) / 2.0
    y_bar = sum(ys) / n
    num = 0.0
    den = 0.0
    for i, y in enumerate(ys):
        dx = i - x_bar
        num += dx * (y - y_bar)
        den += dx * dx
    return num / den


def per_period_maxima(samples, period_ns: int, anchor_ns: int = 0) -> list[int]:
    """Maximum queue sample in each period window from the anchor onward."""
    maxima: dict[int, int] = {}
    for row in samples:
        t = row[0]
        if t < anchor_ns:
            continue
        k = (t - anchor_ns) // period_ns
        q = row[1]
        if q > maxima.get(k, -1):
            maxima[k] = q
    return [maxima[k] for k in sorted(maxima)]


def detect_divergence(samples, period_ns: int, rtt_cells: int, anchor_ns: int = 0,
                      min_periods: int = MIN_PERIODS_FOR_CLASSIFICATION) -> str:
    """Classify a queue trace as CONVERGENT or DIVERGENT (UNKNOWN if too short).

    Divergent means the per-period maxima over the final half of the run grow
    by more than 0.1% of the RTT per period (least squares) and the final
    maximum exceeds 3x the RTT in cells.
    """
    maxima = per_period_maxima(samples, period_ns, anchor_ns)
    if len(maxima) < min_periods:
        return UNKNOWN
    tail = maxima[len(maxima) // 2:]
    if len(tail) < 2:
        return CONVERGENT
    slope = _lsq_slope(tail)
    if slope > DIVERGENCE_SLOPE_RTT_FRACTION * rtt_cells and \
            tail[-1] > DIVERGENCE_LEVEL_RTT_MULTIPLE * rtt_cells:
        return DIVERGENT
    return CONVERGENT


def run_scenario(config: ScenarioConfig, scenario_id: str = "run",
                 keep_trace: bool = False):
    """Run one scenario to completion and collect metrics.

    Returns RunMetrics, or (RunMetrics, trace_rows) when keep_trace is set.
    Identical configurations produce identical metrics and traces.
    """
    simulation = Simulation(config)
    simulation.run()
    metrics = collect_metrics(simulation, scenario_id)
    if keep_trace:
        return metrics, simulation.trace_rows
    return metrics


def collect_metrics(simulation: Simulation, scenario_id: str) -> RunMetrics:
    config = simulation.config
    rtt_cells = rtt_report_cells(config)
    port = simulation.port

    if config.vbr.enabled:
        period = config.vbr.period_ns
        anchor = config.vbr.start_ns
        min_periods = MIN_PERIODS_FOR_CLASSIFICATION
    else:
        # no background cycle: chunk by a fixed pseudo-period over the full run
        period = NO_VBR_PSEUDO_PERIOD_NS
        anchor = 0
        min_periods = 1
    divergence = detect_divergence(simulation.trace_rows, period, rtt_cells, anchor,
                                   min_periods)

    start_steady = config.duration_ns * 2 // 3
    steady = [row[1] for row in simulation.trace_rows if row[0] >= start_steady]
    steady_mean = sum(steady) / len(steady) if steady else 0.0

    per_vc_max = [s.max_queue_seen for s in simulation.sources]
    drops_source = sum(s.cells_dropped for s in simulation.sources)

    return RunMetrics(
        scenario_id=scenario_id,
        n_sources=config.n_sources,
        source_buffer_cells=config.source_buffer_cells,
        vbr_d=config.vbr.duty_cycle if config.vbr.enabled else 0.0,
        vbr_p_ms=config.vbr.period_ms if config.vbr.enabled else 0.0,
        feedback_delay_ms=feedback_delay_ns(config) / NS_PER_MS,
        scheme=config.erica.scheme,
        per_vc_max_source_queue=per_vc_max,
        max_source_queue_cells=max(per_vc_max) if per_vc_max else 0,
        max_switch_queue_cells=port.max_queue_seen,
        max_switch_queue_rtt_frac=port.max_queue_seen / rtt_cells,
        goodput_mbps=simulation.goodput_mbps(),
        drops_source=drops_source,
        drops_switch=port.dropped_abr,
        divergence=divergence,
        steady_state_switch_queue=steady_mean,
        throughput_bound_mbps=max_throughput_bound_mbps(config),
        duration_s=config.duration_s,
        rtt_report_cells=rtt_cells,
        timeouts=sum(s.timeouts for s in simulation.senders),
        per_vc_source_counts=simulation.source_conservation(),
        port_counts=simulation.port_conservation(),
        vbr_counts=(port.arrived_vbr, port.departed_vbr),
        delivered_data_cells=sum(simulation.delivered_cells),
        frm_delivered=simulation.frm_delivered,
    )


# ---------------------------------------------------------------------------
# CSV emission


def metrics_csv_text(metrics_list) -> str:
    return "\n".join([METRICS_HEADER] + [m.csv_row() for m in metrics_list]) + "\n"


def trace_csv_text(trace_rows, per_vc: bool = False) -> str:
    header = "t_us,switch_queue_cells,vbr_on"
    if per_vc and trace_rows and len(trace_rows[0]) > 3:
        n = len(trace_rows[0][3])
        header += "".join(f",vc{i}_acr_cps,vc{i}_srcq_cells" for i in range(n))
    lines = [header]
    for row in trace_rows:
        line = f"{row[0] // 1000},{row[1]},{1 if row[2] else 0}"
        if per_vc and len(row) > 3:
            acrs, queues = row[3], row[4]
            line += "".join(f",{acrs[i]:.3f},{queues[i]}" for i in range(len(acrs)))
        lines.append(line)
    return "\n".join(lines) + "\n"


def emit_metrics_csv(metrics_list, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(metrics_csv_text(metrics_list))


def emit_trace_csv(trace_rows, path: str, per_vc: bool = False) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(trace_csv_text(trace_rows, per_vc))


# ---------------------------------------------------------------------------
# Canned experiment tables

WIN_CELLS = window_cells(1_048_576, 512)   # one receiver window in cells (24576)
BASE_RTT_CELLS = 11040                     # 30 ms at 368 cells/ms


def _modified_erica() -> EricaParams:
    """Utilization-targeting scheme with long intervals and activity smoothing."""
    return EricaParams(scheme="erica", u=0.9, interval_ms=5.0, interval_cells=500,
                       na_averaging=True)


def _plain_erica_plus() -> EricaParams:
    return EricaParams(scheme="erica_plus", interval_ms=1.0, interval_cells=100)


def _vbr(d: float, p_ms: float) -> VbrParams:
    return VbrParams(enabled=True, duty_cycle=d, period_ms=p_ms)


def table1_configs() -> list[tuple[str, ScenarioConfig]]:
    rows = []
    for i, buf in enumerate((100, 1000, 10000, 100000), start=1):
        cfg = ScenarioConfig(
            source_buffer_cells=float(buf),
            duration_s=20.0,
            erica=_modified_erica(),
        )
        rows.append((f"t1r{i}", cfg))
    return rows


def table2_configs() -> list[tuple[str, ScenarioConfig]]:
    grid = [(0.95, 100.0), (0.8, 100.0), (0.7, 100.0),
            (0.95, 10.0), (0.8, 10.0), (0.7, 10.0),
            (0.95, 1.0), (0.8, 1.0), (0.7, 1.0)]
    rows = []
    for i, (d, p) in enumerate(grid, start=1):
        cfg = ScenarioConfig(duration_s=10.0, erica=_plain_erica_plus(), vbr=_vbr(d, p))
        rows.append((f"t2r{i}", cfg))
    return rows


def table3_configs() -> list[tuple[str, ScenarioConfig]]:
    rows = []
    for i, km in enumerate((100.0, 500.0, 1000.0), start=1):
        cfg = ScenarioConfig(
            link_length_km=km, duration_s=10.0,
            erica=_plain_erica_plus(), vbr=_vbr(0.8, 10.0),
        )
        rows.append((f"t3r{i}", cfg))
    return rows


def table4_configs() -> list[tuple[str, ScenarioConfig]]:
    """Two smoothing treatments plus the untreated baseline (which diverges)."""
    baseline = ScenarioConfig(duration_s=10.0, erica=_plain_erica_plus(),
                              vbr=_vbr(0.7, 20.0))
    row1 = ScenarioConfig(
        duration_s=10.0,
        erica=EricaParams(scheme="erica_plus", interval_ms=1.0, interval_cells=100,
                          na_averaging=True, z_averaging="scheme1", alpha_z=0.2),
        vbr=_vbr(0.7, 20.0),
    )
    row2 = ScenarioConfig(
        duration_s=10.0,
        erica=EricaParams(scheme="erica_plus", interval_ms=5.0, interval_cells=500,
                          na_averaging=True),
        vbr=_vbr(0.7, 20.0),
    )
    return [("t4base", baseline), ("t4r1", row1), ("t4r2", row2)]


TABLE_BUILDERS = {1: table1_configs, 2: table2_configs, 3: table3_configs, 4: table4_configs}

# expected outcomes per row, used for the side-by-side report
TABLE2_EXPECTED = {
    "t2r1": (CONVERGENT, 2588), "t2r2": (CONVERGENT, 5217), "t2r3": (CONVERGENT, 5688),
    "t2r4": (CONVERGENT, 2709), "t2r5": (DIVERGENT, None), "t2r6": (DIVERGENT, None),
    "t2r7": (CONVERGENT, 2589), "t2r8": (CONVERGENT, 4077), "t2r9": (CONVERGENT, 2928),
}
TABLE3_EXPECTED = {
    "t3r1": (CONVERGENT, 4176), "t3r2": (DIVERGENT, None), "t3r3": (DIVERGENT, None),
}
TABLE4_EXPECTED = {
    "t4base": (DIVERGENT, None), "t4r1": (CONVERGENT, 5223), "t4r2": (CONVERGENT, 5637),
}
TABLE1_EXPECTED_GOODPUT = {"t1r1": 73.27, "t1r2": 83.79, "t1r3": 95.48, "t1r4": 110.90}


def _run_task(args):
    scenario_id, config = args
    return run_scenario(config, scenario_id)


def run_table_rows(rows, parallel: bool = True) -> list[RunMetrics]:
    """Execute table rows, in parallel when possible; results in row order."""
    if parallel and len(rows) > 1 and (os.cpu_count() or 1) > 1:
        with ProcessPoolExecutor(max_workers=min(os.cpu_count(), len(rows))) as pool:
            return list(pool.map(_run_task, rows))
    return [_run_task(row) for row in rows]


def _check_table1(results: dict) -> list[tuple[str, str, str, bool]]:
    checks = []
    win = WIN_CELLS
    r4 = results["t1r4"]
    target = TABLE1_EXPECTED_GOODPUT["t1r4"]
    checks.append((
        "t1r4 goodput", f"{target} Mbps +-3%", f"{r4.goodput_mbps:.2f} Mbps",
        abs(r4.goodput_mbps - target) <= 0.03 * target,
    ))
    checks.append(("t1r4 drops", "0", str(r4.drops_source + r4.drops_switch),
                   r4.drops_source + r4.drops_switch == 0))
    checks.append((
        "t1r4 max source queue", f"[{0.90 * win:.0f}, {win}] cells",
        str(r4.max_source_queue_cells),
        0.90 * win <= r4.max_source_queue_cells <= win,
    ))
    checks.append((
        "t1r4 steady switch queue", f"< {0.05 * BASE_RTT_CELLS:.0f} cells",
        f"{r4.steady_state_switch_queue:.1f}",
        r4.steady_state_switch_queue < 0.05 * BASE_RTT_CELLS,
    ))
    prev = 0.0
    for rid in ("t1r1", "t1r2", "t1r3"):
        r = results[rid]
        checks.append((f"{rid} drops", "> 0", str(r.drops_source), r.drops_source > 0))
        checks.append((
            f"{rid} goodput ordering", f"> {prev:.2f} and < {r4.goodput_mbps:.2f} Mbps",
            f"{r.goodput_mbps:.2f} Mbps",
            prev < r.goodput_mbps < r4.goodput_mbps,
        ))
        prev = r.goodput_mbps
    for rid in ("t1r2", "t1r3", "t1r4"):
        r = results[rid]
        checks.append((
            f"{rid} max switch queue", f"< {3 * BASE_RTT_CELLS} cells",
            str(r.max_switch_queue_cells),
            r.max_switch_queue_cells < 3 * BASE_RTT_CELLS,
        ))
    return checks


def _check_classification(results: dict, expected: dict, bound_cells: int):
    checks = []
    for rid, (verdict, ref_q) in expected.items():
        r = results[rid]
        ref = verdict if ref_q is None else f"{verdict} (ref max {ref_q})"
        got = f"{r.divergence} (max {r.max_switch_queue_cells})"
        ok = r.divergence == verdict
        if verdict == CONVERGENT:
            ok = ok and r.max_switch_queue_cells < bound_cells
        checks.append((rid, ref, got, ok))
    return checks


def _check_table4(results: dict) -> list[tuple[str, str, str, bool]]:
    checks = []
    base = results["t4base"]
    checks.append(("t4base", DIVERGENT, base.divergence, base.divergence == DIVERGENT))
    for rid in ("t4r1", "t4r2"):
        r = results[rid]
        ref_q = TABLE4_EXPECTED[rid][1]
        ok = r.divergence == CONVERGENT and 2500 <= r.max_switch_queue_cells <= 11040
        checks.append((
            rid, f"{CONVERGENT}, max in [2500, 11040] (ref {ref_q})",
            f"{r.divergence}, max {r.max_switch_queue_cells}", ok,
        ))
    return checks


def reproduce_table(table_id: int, out_dir: str | None = None,
                    parallel: bool = True) -> tuple[list[str], bool]:
    """Run one experiment table; returns the report lines and overall verdict."""
    if table_id not in TABLE_BUILDERS:
        raise ValueError(f"unknown table id {table_id}; choose 1, 2, 3 or 4")
    rows = TABLE_BUILDERS[table_id]()
    metrics = run_table_rows(rows, parallel=parallel)
    results = {m.scenario_id: m for m in metrics}

    if table_id == 1:
        checks = _check_table1(results)
    elif table_id == 2:
        checks = _check_classification(results, TABLE2_EXPECTED, BASE_RTT_CELLS)
    elif table_id == 3:
        checks = _check_classification(results, TABLE3_EXPECTED, BASE_RTT_CELLS)
    else:
        checks = _check_table4(results)

    lines = [f"table {table_id}: {len(rows)} scenario(s)"]
    all_ok = True
    for label, ref, got, ok in checks:
        all_ok = all_ok and ok
        lines.append(f"  [{'PASS' if ok else 'FAIL'}] {label}: expected {ref}, got {got}")
    lines.append(f"table {table_id}: {'PASS' if all_ok else 'FAIL'}")

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        emit_metrics_csv(metrics, os.path.join(out_dir, f"table{table_id}_metrics.csv"))
        with open(os.path.join(out_dir, f"table{table_id}_report.txt"), "w",
                  encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    return lines, all_ok
