"""Worker loop: execute dispatched regions, answer work-stealing requests.

A worker keeps its engine (query cache, serial counter) and its suspended
states across tasks. On a new task it first tries to resume a suspended
state the test satisfies; otherwise it replays from the program root.
Between scheduler steps it polls for ProvideWork and either hands off its
shallowest active state or answers NoWork.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import proto
from .engine import DEFAULT_MAX_STEPS, Engine, ExecState
from .lang import Program
from .solve import DEFAULT_DOMAIN_CAP

DEFAULT_OFFLOAD_THRESHOLD = 4


@dataclass
class WorkerConfig:
    worker_id: int = 0
    offload_threshold: int = DEFAULT_OFFLOAD_THRESHOLD
    resume_order: str = "deepest"  # 'deepest' | 'list'
    cache_enabled: bool = True
    max_steps: int = DEFAULT_MAX_STEPS
    domain_cap: int = DEFAULT_DOMAIN_CAP
    solver_delay: float = 0.0
    recv_timeout: float = proto.DEFAULT_RECV_TIMEOUT
    # threads-mode determinism hooks: record notes (region, step) pairs where
    # a mid-region ProvideWork was observed; replay forces polls exactly there
    poll_recorder: object | None = None  # callable (worker_id, region, step)
    poll_schedule: frozenset | None = None  # {(region, step), ...}


@dataclass
class WorkerSummary:
    regions: int = 0
    suspended_left: int = 0
    offloads: int = 0
    stats_sent: list = field(default_factory=list)


def choose_offload(active: list[ExecState]) -> ExecState:
    """Shallowest active state, earliest-created on ties: cheapest for the
    thief to re-replay and the largest subtree to hand over."""
    return min(active, key=lambda s: (s.depth, s.serial))


def _make_poll(transport, eng: Engine, cfg: WorkerConfig, region_idx: int, summary: WorkerSummary):
    def handle(msg, active: list[ExecState]) -> None:
        if not isinstance(msg, proto.ProvideWork):
            raise proto.ProtocolError(
                f"unexpected {type(msg).__name__} during a region"
            )
        if len(active) > cfg.offload_threshold:
            victim = choose_offload(active)
            active.remove(victim)
            transport.send(proto.Offload(eng.model_of(victim.pc), victim.depth))
            summary.offloads += 1
        else:
            transport.send(proto.NoWork())

    if cfg.poll_schedule is not None:
        schedule = cfg.poll_schedule

        def poll(active: list[ExecState], step: int) -> None:
            if (region_idx, step) not in schedule:
                return
            handle(transport.recv(cfg.recv_timeout), active)

        return poll

    def poll(active: list[ExecState], step: int) -> None:
        msg = transport.poll()
        if msg is None:
            return
        if cfg.poll_recorder is not None:
            cfg.poll_recorder(cfg.worker_id, region_idx, step)
        handle(msg, active)

    return poll


def run_worker(transport, program: Program, cfg: WorkerConfig | None = None) -> WorkerSummary:
    """Serve tasks until Terminate. Returns a local summary (the coordinator
    only ever sees the Finish messages)."""
    cfg = cfg or WorkerConfig()
    eng = Engine(
        program,
        cache_enabled=cfg.cache_enabled,
        max_steps=cfg.max_steps,
        domain_cap=cfg.domain_cap,
        solver_delay=cfg.solver_delay,
    )
    suspended: list[ExecState] = []
    summary = WorkerSummary()
    region_idx = 0
    while True:
        msg = transport.recv(cfg.recv_timeout)
        if isinstance(msg, proto.Terminate):
            break
        if isinstance(msg, proto.ProvideWork):
            # idle: nothing to offload
            transport.send(proto.NoWork())
            continue
        if not isinstance(msg, proto.Task):
            raise proto.ProtocolError(f"unexpected {type(msg).__name__} while idle")

        root = eng.find_resumable(suspended, msg.test, cfg.resume_order)
        if root is not None:
            suspended.remove(root)
        else:
            root = eng.initial_state()
        poll = _make_poll(transport, eng, cfg, region_idx, summary)
        result = eng.start_execution(
            root, msg.test, msg.test_depth, msg.final_depth, msg.strategy, poll=poll
        )
        suspended.extend(result.suspended_new)
        summary.regions += 1
        summary.stats_sent.append(result.stats)
        transport.send(proto.Finish(result.stats))
        region_idx += 1
    summary.suspended_left = len(suspended)
    transport.close()
    return summary
