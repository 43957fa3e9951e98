"""Desk-scale dataflow executor for physical plans.

Runs one logical worker per assigned worker id. Each worker hosts its
node's operator with a service time drawn from the profiled throughput
(scaled by the tier's location coefficient, i.e. the worker stands in for
every replica of itself across the partition). Relay brokers connect
adjacent workers: every message pays a per-message plus per-byte relay
cost and is dispatched to downstream workers with capacity-proportional
weighted round-robin, the same split the cost model assumes.

The default engine is a single-threaded virtual-time event loop and is
fully deterministic for a fixed seed. Wall-clock mode runs the same
pipeline as real threads over bounded FIFO channels; it exists to
sanity-check the channel design, not to produce precise numbers.

Queues are bounded (default 1024 items). A worker that cannot hand off
its output blocks until the downstream queue drains; sources never block,
they drop (external arrivals don't wait).
"""

from __future__ import annotations

import heapq
import math
import random
import threading
import time as _time
from collections import deque
from dataclasses import dataclass, field

from .assignment import check_physical, serving_shares
from .errors import HetplanError
from .model import (
    CostBreakdown,
    InfrastructureSpec,
    LogicalPlan,
    PhysicalPlan,
)
from .profiles import PERCENTILES, ProfileSet, throughput_coefficient

MODES = ("virtual-time", "wall-clock")


@dataclass(frozen=True)
class RelayCostModel:
    """Relay broker cost: seconds per message plus seconds per byte."""

    per_message_s: float = 0.002
    per_byte_s: float = 2e-9

    def latency(self, n_bytes: float) -> float:
        return self.per_message_s + self.per_byte_s * n_bytes


@dataclass(frozen=True)
class SimConfig:
    duration: float = 300.0
    latency_percentile: str | None = None  # None: the profile set's default
    latency_jitter: float = 0.0  # coefficient of variation of service time
    mode: str = "virtual-time"
    seed: int = 0
    queue_capacity: int = 1024
    warmup_fraction: float = 0.1
    relay: RelayCostModel = RelayCostModel()
    allow_underprovisioned: bool = False
    # Real seconds per simulated second in wall-clock mode.
    wall_clock_scale: float = 0.002

    def __post_init__(self):
        if self.duration <= 0:
            raise HetplanError("duration must be positive")
        if self.mode not in MODES:
            raise HetplanError(f"unknown mode {self.mode!r}")
        if self.latency_jitter < 0:
            raise HetplanError("latency_jitter must be >= 0")
        if self.latency_percentile is not None and (
            self.latency_percentile not in PERCENTILES
        ):
            raise HetplanError(f"unknown percentile {self.latency_percentile!r}")
        if not 0 <= self.warmup_fraction < 1:
            raise HetplanError("warmup_fraction must be in [0, 1)")


@dataclass
class SimReport:
    achieved_throughput: dict[str, float]
    accrued_cost: CostBreakdown
    relay_overhead_fraction: dict[str, float]  # per-node median
    queue_high_watermarks: dict[str, int]
    items_emitted: int
    items_at_sink: int
    items_dropped: int
    items_in_flight: int
    fifo_violations: int
    duration: float
    mode: str
    overhead_samples: dict[str, list[float]] = field(default_factory=dict)
    # Post-warmup sink arrival timestamps (virtual seconds), for time series.
    sink_arrival_times: list[float] = field(default_factory=list)


def _percentile(samples, q):
    """Nearest-rank percentile; 0 for an empty sample set."""
    if not samples:
        return 0.0
    ordered = sorted(samples)
    rank = max(1, math.ceil(q / 100.0 * len(ordered)))
    return ordered[rank - 1]


def measure_overhead(report: SimReport) -> dict[str, dict[str, float]]:
    """P50/P90 of relay time over operator service time, per node."""
    return {
        node: {
            "P50": _percentile(samples, 50),
            "P90": _percentile(samples, 90),
        }
        for node, samples in sorted(report.overhead_samples.items())
    }


class _Message:
    __slots__ = ("src", "seq", "bytes")

    def __init__(self, src: str, seq: int, n_bytes: float):
        self.src = src
        self.seq = seq
        self.bytes = n_bytes


class _WeightedDispatch:
    """Smooth weighted round-robin over a node's workers.

    Long-run pick frequencies converge to the weights, which makes the
    observed traffic split match the analytical serving shares.
    """

    def __init__(self, targets):  # [(worker_id, weight)]
        self.targets = list(targets)
        self.current = {w: 0.0 for w, _ in targets}

    def pick(self) -> str:
        best = None
        for w, weight in self.targets:
            self.current[w] += weight
            if best is None or self.current[w] > self.current[best] + 1e-15:
                best = w
        self.current[best] -= 1.0
        return best


class _Worker:
    def __init__(self, node, wid, service_time, out_ratio, rng):
        self.node = node
        self.id = wid
        self.service_time = service_time
        self.out_ratio = out_ratio
        self.rng = rng
        self.queue: deque[_Message] = deque()
        self.occupancy = 0  # queued + in flight toward this queue
        self.waiters: deque = deque()  # blocked producers' pending sends
        self.busy = False
        self.blocked = False
        self.pending_out: deque = deque()
        self.credits = 0.0
        self.last_out = -1
        self.watermark = 0
        self.completions: list[float] = []
        self.last_seq: dict[str, int] = {}

    def draw_service(self) -> float:
        if self.rng is None:
            return self.service_time
        return self.service_time * self.rng.lognormvariate(self._mu, self._sigma)

    def set_jitter(self, cv: float):
        if cv <= 0 or self.rng is None:
            self.rng = None
            return
        self._sigma = math.sqrt(math.log(1.0 + cv * cv))
        self._mu = -0.5 * self._sigma * self._sigma


class _Engine:
    """Virtual-time event loop shared by both simulation modes' logic."""

    def __init__(self, plan, physical, infra, profiles, cfg):
        self.plan = plan
        self.cfg = cfg
        self.infra = infra
        self.events: list = []
        self.seq = 0
        self.now = 0.0
        self.warmup = cfg.warmup_fraction * cfg.duration
        self.window = cfg.duration - self.warmup

        selection = physical.selection
        pct = cfg.latency_percentile
        self.workers: dict[str, _Worker] = {}
        self.node_workers: dict[str, list[str]] = {}
        self.dispatch: dict[tuple[str, str], _WeightedDispatch] = {}
        self.edge_bytes_price: dict[tuple[str, str, str], float] = {}
        self.sink = plan.sink()
        self.sink_arrivals: list[float] = []
        self.sink_total = 0
        self.sink_last_seq: dict[str, int] = {}
        self.fifo_violations = 0
        self.emitted = 0
        self.dropped = 0
        self.network_dollars = 0.0
        self.overhead: dict[str, list[float]] = {
            n.id: [] for n in plan.nodes if n.kind in ("ml", "relational")
        }
        self.source_emissions: dict[str, list[float]] = {}

        for node in plan.nodes:
            if node.kind not in ("ml", "relational"):
                continue
            variant = selection[node.id]
            assigned = sorted(physical.assignment.get(node.id, ()))
            self.node_workers[node.id] = assigned
            for wid in assigned:
                w = infra.worker(wid)
                rate = profiles.throughput(variant, w.type, pct)
                rate *= throughput_coefficient(wid, infra)
                if rate <= 0:
                    raise HetplanError(
                        f"worker {wid} cannot serve {variant} at {node.id}"
                    )
                rng = random.Random(f"{cfg.seed}:{node.id}:{wid}")
                worker = _Worker(
                    node.id, wid, 1.0 / rate, node.output_ratio[variant], rng
                )
                worker.set_jitter(cfg.latency_jitter)
                self.workers[wid] = worker

        # Per (producer entity, consumer node) dispatchers and traffic prices.
        for (u, v) in plan.edges:
            v_node = plan.node(v)
            if v_node.kind == "sink":
                continue
            shares = serving_shares(
                selection[v], self.node_workers[v], infra, profiles, pct
            )
            producers = (
                [u]
                if plan.node(u).kind == "source"
                else self.node_workers.get(u, [])
            )
            for p in producers:
                self.dispatch[(p, v)] = _WeightedDispatch(
                    [(wid, s) for (wid, _, s) in shares]
                )
                tier_p = 1 if plan.node(u).kind == "source" else infra.tier_of(p)
                for (wid, tier_w, _) in shares:
                    self.edge_bytes_price[(p, v, wid)] = _traffic_price(
                        infra, tier_p, tier_w
                    )

    # -- event plumbing ---------------------------------------------------

    def schedule(self, t, fn, *args):
        self.seq += 1
        heapq.heappush(self.events, (t, self.seq, fn, args))

    def run(self):
        for node in self.plan.nodes:
            if node.kind == "source":
                rate = self.plan.source_throughput[node.id]
                self.source_emissions[node.id] = []
                if rate > 0:
                    self.schedule(0.0, self._emit, node.id, 1.0 / rate, 0)
        while self.events:
            t, _, fn, args = heapq.heappop(self.events)
            if t > self.cfg.duration:
                break
            self.now = t
            fn(*args)

    # -- sources ----------------------------------------------------------

    def _emit(self, src, interval, seq):
        self.emitted += 1
        if self.now >= self.warmup:
            self.source_emissions[src].append(self.now)
        r_bytes = {}
        for (u, v) in self.plan.edges:
            if u == src:
                r_bytes[v] = self.plan.edge_unit_size[(u, v)]
        for v, n_bytes in r_bytes.items():
            msg = _Message(src, seq, n_bytes)
            if not self._send(src, v, msg):
                self.dropped += 1
        nxt = (seq + 1) * interval
        if nxt <= self.cfg.duration:
            self.schedule(nxt, self._emit, src, interval, seq + 1)

    # -- message transport ------------------------------------------------

    def _send(self, producer_entity, v, msg) -> bool:
        """Route one message toward node v. False when dropped (sources)."""
        if v == self.sink:
            self.schedule(
                self.now + self.cfg.relay.latency(msg.bytes),
                self._sink_arrive,
                msg,
            )
            return True
        dest_id = self.dispatch[(producer_entity, v)].pick()
        dest = self.workers[dest_id]
        if dest.occupancy >= self.cfg.queue_capacity:
            return False
        self._deliver(producer_entity, dest, msg)
        return True

    def _deliver(self, producer_entity, dest, msg):
        dest.occupancy += 1
        if self.now >= self.warmup:
            price = self.edge_bytes_price.get(
                (producer_entity, dest.node, dest.id), 0.0
            )
            self.network_dollars += price * msg.bytes
        self.schedule(
            self.now + self.cfg.relay.latency(msg.bytes),
            self._arrive,
            dest,
            producer_entity,
            msg,
        )

    def _arrive(self, dest, producer_entity, msg):
        key = producer_entity
        if msg.seq < dest.last_seq.get(key, -1):
            self.fifo_violations += 1
        dest.last_seq[key] = msg.seq
        dest.queue.append(msg)
        dest.watermark = max(dest.watermark, len(dest.queue))
        if not dest.busy and not dest.blocked:
            self._start_service(dest)

    def _sink_arrive(self, msg):
        if msg.seq < self.sink_last_seq.get(msg.src, -1):
            self.fifo_violations += 1
        self.sink_last_seq[msg.src] = msg.seq
        self.sink_total += 1
        if self.now >= self.warmup:
            self.sink_arrivals.append(self.now)

    # -- workers ----------------------------------------------------------

    def _start_service(self, worker):
        if not worker.queue:
            worker.busy = False
            return
        msg = worker.queue.popleft()
        worker.occupancy -= 1
        self._admit_waiter(worker)
        worker.busy = True
        service = worker.draw_service()
        if self.now >= self.warmup:
            self.overhead[worker.node].append(
                self.cfg.relay.latency(msg.bytes) / service
            )
        self.schedule(self.now + service, self._complete, worker)

    def _admit_waiter(self, worker):
        if not worker.waiters:
            return
        producer, msg = worker.waiters.popleft()
        self._deliver(producer.id, worker, msg)
        producer.pending_out.remove((worker.id, msg))
        if producer.blocked and not producer.pending_out:
            producer.blocked = False
            if not producer.busy:
                self._start_service(producer)

    def _complete(self, worker):
        worker.busy = False
        if self.now >= self.warmup:
            worker.completions.append(self.now)
        worker.credits += worker.out_ratio
        n_out = int(worker.credits)
        worker.credits -= n_out
        for _ in range(n_out):
            worker.last_out += 1
            seq = worker.last_out
            for (u, v) in self.plan.edges:
                if u != worker.node:
                    continue
                msg = _Message(worker.id, seq, self.plan.edge_unit_size[(u, v)])
                if v == self.sink:
                    self._send(worker.id, v, msg)
                    continue
                dest_id = self.dispatch[(worker.id, v)].pick()
                dest = self.workers[dest_id]
                if dest.occupancy >= self.cfg.queue_capacity:
                    dest.waiters.append((worker, msg))
                    worker.pending_out.append((dest_id, msg))
                else:
                    self._deliver(worker.id, dest, msg)
        if worker.pending_out:
            worker.blocked = True
        else:
            self._start_service(worker)


def _traffic_price(infra: InfrastructureSpec, tier_from: int, tier_to: int) -> float:
    price = infra.traffic(tier_from, tier_to)
    if price == math.inf:
        # Downward hop in a plan that was built with the constraint relaxed:
        # price it like the corresponding upward hop.
        price = infra.traffic(min(tier_from, tier_to), max(tier_from, tier_to))
    return price if price != math.inf else 0.0


def run_simulation(
    plan: LogicalPlan,
    physical: PhysicalPlan,
    infra: InfrastructureSpec,
    profiles: ProfileSet,
    cfg: SimConfig = SimConfig(),
) -> SimReport:
    """Execute a physical plan and report what it actually delivered.

    Refuses under-capacity plans unless ``cfg.allow_underprovisioned`` —
    simulating those is how you measure the shortfall, not a mistake, but
    it should be asked for explicitly.
    """
    issues = check_physical(plan, physical, infra, profiles, enforce_a2=False)
    capacity_issues = [m for m in issues if "capacity" in m]
    if capacity_issues and not cfg.allow_underprovisioned:
        raise HetplanError("; ".join(capacity_issues))

    if cfg.mode == "wall-clock":
        return _run_wall_clock(plan, physical, infra, profiles, cfg)

    engine = _Engine(plan, physical, infra, profiles, cfg)
    engine.run()
    return _report(plan, physical, infra, engine, cfg)


def _report(plan, physical, infra, engine, cfg) -> SimReport:
    window = engine.window if engine.window > 0 else cfg.duration
    achieved: dict[str, float] = {}
    watermarks: dict[str, int] = {}
    in_flight = 0
    for node in plan.nodes:
        if node.kind == "source":
            achieved[node.id] = len(engine.source_emissions[node.id]) / window
        elif node.kind == "sink":
            achieved[node.id] = len(engine.sink_arrivals) / window
        else:
            done = sum(
                len(engine.workers[w].completions)
                for w in engine.node_workers[node.id]
            )
            achieved[node.id] = done / window
            watermarks[node.id] = max(
                (engine.workers[w].watermark for w in engine.node_workers[node.id]),
                default=0,
            )
            in_flight += sum(
                engine.workers[w].occupancy for w in engine.node_workers[node.id]
            )

    compute = sum(
        infra.hourly_price(w) for ws in physical.assignment.values() for w in ws
    )
    network = engine.network_dollars / (window / 3600.0)
    overhead_p50 = {
        node: _percentile(samples, 50) for node, samples in engine.overhead.items()
    }
    return SimReport(
        achieved_throughput=achieved,
        accrued_cost=CostBreakdown.make(compute, network),
        relay_overhead_fraction=overhead_p50,
        queue_high_watermarks=watermarks,
        items_emitted=engine.emitted,
        items_at_sink=engine.sink_total,
        items_dropped=engine.dropped,
        items_in_flight=in_flight,
        fifo_violations=engine.fifo_violations,
        duration=cfg.duration,
        mode=cfg.mode,
        overhead_samples=engine.overhead,
        sink_arrival_times=list(engine.sink_arrivals),
    )


# -- wall-clock mode --------------------------------------------------------
#
# One thread per worker, one per source; bounded queue.Queue channels. The
# point is exercising the channel/backpressure design under real
# concurrency, so timing here is approximate by construction.


def _run_wall_clock(plan, physical, infra, profiles, cfg) -> SimReport:
    import queue as _q

    scale = cfg.wall_clock_scale
    selection = physical.selection
    pct = cfg.latency_percentile
    stop = threading.Event()
    sink = plan.sink()
    sink_count = [0]
    sink_lock = threading.Lock()

    channels: dict[str, _q.Queue] = {}
    node_workers: dict[str, list[str]] = {}
    rates: dict[str, float] = {}
    for node in plan.nodes:
        if node.kind not in ("ml", "relational"):
            continue
        node_workers[node.id] = sorted(physical.assignment.get(node.id, ()))
        for wid in node_workers[node.id]:
            w = infra.worker(wid)
            rate = profiles.throughput(selection[node.id], w.type, pct)
            rates[wid] = rate * throughput_coefficient(wid, infra)
            channels[wid] = _q.Queue(maxsize=cfg.queue_capacity)

    dispatch = {}
    for (u, v) in plan.edges:
        if plan.node(v).kind == "sink":
            continue
        shares = serving_shares(selection[v], node_workers[v], infra, profiles, pct)
        dispatch[(u, v)] = _WeightedDispatch([(wid, s) for (wid, _, s) in shares])

    def forward(node_id, count=1):
        for _ in range(count):
            for (a, b) in plan.edges:
                if a != node_id:
                    continue
                if b == sink:
                    with sink_lock:
                        sink_count[0] += 1
                else:
                    with sink_lock:
                        dest = dispatch[(a, b)].pick()
                    channels[dest].put(None)

    def worker_loop(node_id, wid):
        credits = 0.0
        node = plan.node(node_id)
        while not stop.is_set():
            try:
                channels[wid].get(timeout=0.05)
            except _q.Empty:
                continue
            _time.sleep(scale / rates[wid])
            credits += node.output_ratio[selection[node_id]]
            n_out = int(credits)
            credits -= n_out
            forward(node_id, n_out)

    def source_loop(src):
        rate = plan.source_throughput[src]
        n = int(rate * cfg.duration)
        for _ in range(n):
            if stop.is_set():
                return
            forward(src)
            _time.sleep(scale / rate)

    threads = [
        threading.Thread(target=worker_loop, args=(nid, wid), daemon=True)
        for nid, ws in node_workers.items()
        for wid in ws
    ]
    threads += [
        threading.Thread(target=source_loop, args=(n.id,), daemon=True)
        for n in plan.nodes
        if n.kind == "source"
    ]
    for t in threads:
        t.start()
    _time.sleep(cfg.duration * scale + 0.2)
    stop.set()
    for t in threads:
        t.join(timeout=1.0)

    compute = sum(
        infra.hourly_price(w) for ws in physical.assignment.values() for w in ws
    )
    achieved = {sink: sink_count[0] / cfg.duration}
    return SimReport(
        achieved_throughput=achieved,
        accrued_cost=CostBreakdown.make(compute, 0.0),
        relay_overhead_fraction={},
        queue_high_watermarks={},
        items_emitted=sum(
            int(plan.source_throughput[n.id] * cfg.duration)
            for n in plan.nodes
            if n.kind == "source"
        ),
        items_at_sink=sink_count[0],
        items_dropped=0,
        items_in_flight=0,
        fifo_violations=0,
        duration=cfg.duration,
        mode=cfg.mode,
    )
