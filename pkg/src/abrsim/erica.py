"""Explicit-rate computation for one bottleneck output port.

The engine measures ABR input rate, background (VBR) usage, queue length and
per-VC activity over successive intervals, derives an overload factor, and
allocates each VC the larger of a fair share and its own rate scaled by the
overload.  Optional smoothing reduces the variance of the overload factor and
of the active-source count; boundary cases (no input seen, background
saturating the link, fewer than one active source) are clamped explicitly.
"""

import math

from .config import EricaParams


def queue_control_factor(q: float, params: EricaParams, link_cell_rate: float) -> float:
    """Capacity scale factor as a function of queue length.

    Two hyperbolic branches meeting at the queue target q0 (the queue that
    holds t0 worth of delay): f(0) = b, f(q0) = 1, decreasing toward the
    drain-limit floor qdlf as the queue grows.
    """
    q0 = params.t0_us * 1e-6 * link_cell_rate
    if q <= q0:
        f = params.b * q0 / ((params.b - 1.0) * q + q0)
    else:
        f = params.a * q0 / ((params.a - 1.0) * q + q0)
    return f if f > params.qdlf else params.qdlf


def update_activity(activity: float, seen_this_interval: bool, alpha_n: float) -> float:
    """Activity level of one VC: 1.0 when seen, otherwise decayed by alpha_n."""
    return 1.0 if seen_this_interval else activity * alpha_n


def average_overload_scheme1(z_avg: float | None, z_inst: float, alpha_z: float) -> float | None:
    """Exponential averaging of the overload factor with outlier reset.

    A measured overload of zero or infinity resets the average (returns None);
    the next finite sample re-seeds it.
    """
    if z_inst <= 0.0 or math.isinf(z_inst) or math.isnan(z_inst):
        return None
    if z_avg is None:
        return z_inst
    return alpha_z * z_inst + (1.0 - alpha_z) * z_avg


def average_overload_scheme2(
    avg_in: float | None,
    avg_cap: float | None,
    in_inst: float,
    cap_inst: float,
    alpha_z: float,
) -> tuple[float, float, float]:
    """Ratio-of-averages overload: input rate and capacity averaged separately.

    Outlier samples (zero input, zero capacity) are retained in the averages,
    so once any traffic has been seen the ratio stays finite and positive.
    Returns (new avg_in, new avg_cap, overload).
    """
    if avg_in is None or avg_cap is None:
        avg_in, avg_cap = in_inst, cap_inst
    else:
        avg_in = alpha_z * in_inst + (1.0 - alpha_z) * avg_in
        avg_cap = alpha_z * cap_inst + (1.0 - alpha_z) * avg_cap
    z = avg_in / avg_cap if avg_cap > 0.0 else math.inf
    return avg_in, avg_cap, z


class EricaEngine:
    """Measurement and allocation state for one output port.

    Driven by the switch: `note_abr_cell` / `note_vbr_cell` per arrival and
    `finalize_interval` when the measurement interval ends (cell-count limit
    reached, or the interval timer fires).  `explicit_rate` is evaluated when
    a backward RM cell traverses the port.
    """

    def __init__(self, params: EricaParams, link_cell_rate: float, n_sources: int):
        self.params = params
        self.link_cell_rate = link_cell_rate
        self.n_sources = n_sources

        # interval accumulators
        self.abr_cells_in = 0
        self.vbr_cells_in = 0
        self.interval_start = 0
        self.seen = bytearray(n_sources)
        self.ccr: list[float | None] = [None] * n_sources

        # finalized metrics
        self.activity = [0.0] * n_sources
        self.n_active = float(n_sources)
        self.target_capacity = params.utilization * link_cell_rate
        self.fairshare = self.target_capacity / n_sources
        self.z_inst = 1.0
        self.z_alloc = 1.0
        self.z_avg: float | None = None       # scheme1 running average
        self._z_last_defined: float | None = None
        self.avg_input: float | None = None   # scheme2 running averages
        self.avg_capacity: float | None = None
        self.intervals_completed = 0

    # -- per-arrival hooks ------------------------------------------------

    def note_abr_cell(self, vc: int, is_frm: bool, ccr: float | None) -> bool:
        """Count a forward ABR arrival; True when the cell-count limit is hit."""
        self.abr_cells_in += 1
        self.seen[vc] = 1
        if is_frm:
            self.ccr[vc] = ccr
        return self.abr_cells_in >= self.params.interval_cells

    def note_vbr_cell(self) -> None:
        self.vbr_cells_in += 1

    # -- interval end ------------------------------------------------------

    def finalize_interval(self, now_ns: int, queue_cells: int) -> bool:
        """Close the measurement interval ending at now_ns.

        Returns False (and keeps accumulating) for a zero-length interval,
        which can only happen if called twice at the same instant.
        """
        duration_ns = now_ns - self.interval_start
        if duration_ns <= 0:
            return False
        p = self.params
        duration_s = duration_ns * 1e-9
        input_rate = self.abr_cells_in / duration_s
        vbr_rate = self.vbr_cells_in / duration_s

        abr_capacity = self.link_cell_rate - vbr_rate
        if abr_capacity < 0.0:
            abr_capacity = 0.0
        if p.scheme == "erica_plus":
            factor = queue_control_factor(queue_cells, p, self.link_cell_rate)
        else:
            factor = p.u
        target = factor * abr_capacity

        if target > 0.0:
            z = input_rate / target
        else:
            z = math.inf   # background saturating the link: maximal overload
        self.z_inst = z

        if p.z_averaging == "scheme1":
            self.z_avg = average_overload_scheme1(self.z_avg, z, p.alpha_z)
            if self.z_avg is not None:
                self._z_last_defined = self.z_avg
            # while the average is reset, allocation keeps the last defined value
            self.z_alloc = self._z_last_defined if self._z_last_defined is not None else z
        elif p.z_averaging == "scheme2":
            self.avg_input, self.avg_capacity, self.z_alloc = average_overload_scheme2(
                self.avg_input, self.avg_capacity, input_rate, target, p.alpha_z
            )
        else:
            self.z_alloc = z

        activity = self.activity
        seen = self.seen
        if p.na_averaging:
            alpha_n = p.alpha_n
            for vc in range(self.n_sources):
                activity[vc] = 1.0 if seen[vc] else activity[vc] * alpha_n
        else:
            for vc in range(self.n_sources):
                activity[vc] = 1.0 if seen[vc] else 0.0
        n_active = sum(activity)
        if n_active < 1.0:
            n_active = 1.0   # boundary clamp: never allocate for less than one source
        self.n_active = n_active

        self.target_capacity = target
        self.fairshare = target / n_active

        self.abr_cells_in = 0
        self.vbr_cells_in = 0
        for vc in range(self.n_sources):
            seen[vc] = 0
        self.interval_start = now_ns
        self.intervals_completed += 1
        return True

    # -- allocation ----------------------------------------------------------

    def explicit_rate(self, vc: int) -> float:
        """Rate stamped for one VC: max(fairshare, ccr/z), capped at the target."""
        if self.intervals_completed == 0:
            return self.target_capacity / self.n_sources
        target = self.target_capacity
        er = self.fairshare
        ccr = self.ccr[vc]
        if ccr is not None:
            z = self.z_alloc
            if z > 0.0 and not math.isinf(z):
                vc_share = ccr / z
            elif z <= 0.0:
                vc_share = target    # underestimated load: allocate the whole target
            else:
                vc_share = 0.0
            if vc_share > er:
                er = vc_share
        return er if er < target else target
