"""Run modes, reporting, verification, calibration, corpus generation, CLI.

The harness owns process and thread lifecycle; everything crossing a
worker boundary goes through proto frames. Three modes share one report
shape: `single` runs the whole tree as one in-process region (the oracle
the distributed modes are checked against), `threads` runs workers as
threads over in-process queues (deterministically replayable via a
recorded message schedule), and `tcp` runs the same workers over loopback
sockets, best-effort nondeterministic.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import random
import socket
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from . import coord, lang, proto, worker
from .coord import CoordConfig, WorkerTally, run_coordinator, seed_pool
from .engine import DEFAULT_MAX_STEPS, Engine, EngineStats, Strategy
from .lang import Program
from .solve import DEFAULT_DOMAIN_CAP
from .worker import WorkerConfig, run_worker

# ---------------------------------------------------------------------------
# Run configuration and output
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    mode: str = "single"  # 'single' | 'threads' | 'tcp'
    workers: int = 1
    strategy: Strategy = Strategy("dfs")
    final_depth: int = 0
    offload_threshold: int = worker.DEFAULT_OFFLOAD_THRESHOLD
    resume_order: str = "deepest"
    cache_enabled: bool = True
    solver_delay: float = 0.0  # seconds per uncached solver query
    time_budget: float | None = None  # soft deadline, seconds
    max_steps: int = DEFAULT_MAX_STEPS
    domain_cap: int = DEFAULT_DOMAIN_CAP
    record_schedule: str | None = None
    replay_schedule: str | None = None


@dataclass
class RunOutput:
    program_name: str
    program_digest: str
    mode: str
    num_workers: int
    strategy: Strategy
    final_depth: int
    tallies: list[WorkerTally]
    paths: list[str]
    pool_size: int
    undispatched: int
    truncated: bool
    wall_ms: int


def program_digest(program: Program) -> str:
    return hashlib.sha256(lang.print_program(program).encode("utf-8")).hexdigest()


def path_digest(paths: list[str]) -> str:
    """Digest of the completed path multiset (order-independent)."""
    return hashlib.sha256("\n".join(sorted(paths)).encode("ascii")).hexdigest()


# ---------------------------------------------------------------------------
# Message-schedule recording (threads-mode determinism)
# ---------------------------------------------------------------------------


@dataclass
class Schedule:
    coordinator: list[tuple[int, str]]  # message arrival order at the coordinator
    polls: dict[int, list[tuple[int, int]]]  # worker -> (region, step) poll hits

    def to_json(self) -> str:
        return json.dumps(
            {
                "coordinator": [[w, t] for w, t in self.coordinator],
                "polls": {str(w): [[r, s] for r, s in v] for w, v in self.polls.items()},
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "Schedule":
        raw = json.loads(text)
        return cls(
            coordinator=[(int(w), str(t)) for w, t in raw["coordinator"]],
            polls={
                int(w): [(int(r), int(s)) for r, s in v]
                for w, v in raw.get("polls", {}).items()
            },
        )


class ScheduleRecorder:
    """Coordinator appends from its own thread; each worker appends only to
    its own poll list, so no locking is needed."""

    def __init__(self, num_workers: int):
        self.coordinator: list[tuple[int, str]] = []
        self.polls: dict[int, list[tuple[int, int]]] = {w: [] for w in range(num_workers)}

    def record_recv(self, worker_id: int, tag: str) -> None:
        self.coordinator.append((worker_id, tag))

    def record_poll(self, worker_id: int, region: int, step: int) -> None:
        self.polls[worker_id].append((region, step))

    def schedule(self) -> Schedule:
        return Schedule(list(self.coordinator), {w: list(v) for w, v in self.polls.items()})


# ---------------------------------------------------------------------------
# Run modes
# ---------------------------------------------------------------------------


def run_single(program: Program, cfg: RunConfig) -> RunOutput:
    t0 = time.perf_counter()
    pairs = seed_pool(
        program, 1, cfg.final_depth, domain_cap=cfg.domain_cap, max_steps=cfg.max_steps
    )
    eng = Engine(
        program,
        cache_enabled=cfg.cache_enabled,
        max_steps=cfg.max_steps,
        domain_cap=cfg.domain_cap,
        solver_delay=cfg.solver_delay,
    )
    tally = WorkerTally()
    suspended = []
    paths: list[str] = []
    truncated = False
    for pair in pairs:
        root = eng.find_resumable(suspended, pair.test, cfg.resume_order)
        if root is not None:
            suspended.remove(root)
        else:
            root = eng.initial_state()
        res = eng.start_execution(
            root, pair.test, pair.depth, cfg.final_depth, cfg.strategy
        )
        suspended.extend(res.suspended_new)
        st = res.stats
        tally.regions += 1
        tally.paths.extend(st.paths)
        tally.frontier += st.frontier
        tally.states_created += st.states_created
        tally.states_suspended += st.states_suspended
        tally.solver_queries += st.solver_queries
        tally.cache_hits += st.cache_hits
        tally.instructions += st.instructions
        tally.wall_us += st.wall_us
        tally.truncated = tally.truncated or st.truncated
        truncated = truncated or st.truncated
        paths.extend(st.paths)
    return RunOutput(
        program_name=program.name,
        program_digest=program_digest(program),
        mode="single",
        num_workers=1,
        strategy=cfg.strategy,
        final_depth=cfg.final_depth,
        tallies=[tally],
        paths=paths,
        pool_size=len(pairs),
        undispatched=0,
        truncated=truncated,
        wall_ms=int((time.perf_counter() - t0) * 1000),
    )


def _worker_cfg(cfg: RunConfig, wid: int, recorder, schedule: Schedule | None) -> WorkerConfig:
    poll_schedule = None
    if schedule is not None:
        poll_schedule = frozenset(schedule.polls.get(wid, []))
    return WorkerConfig(
        worker_id=wid,
        offload_threshold=cfg.offload_threshold,
        resume_order=cfg.resume_order,
        cache_enabled=cfg.cache_enabled,
        max_steps=cfg.max_steps,
        domain_cap=cfg.domain_cap,
        solver_delay=cfg.solver_delay,
        poll_recorder=recorder.record_poll if recorder is not None else None,
        poll_schedule=poll_schedule,
    )


def _coord_cfg(cfg: RunConfig, recorder, schedule: Schedule | None) -> CoordConfig:
    return CoordConfig(
        num_workers=cfg.workers,
        final_depth=cfg.final_depth,
        strategy=cfg.strategy,
        time_budget=cfg.time_budget,
        domain_cap=cfg.domain_cap,
        max_steps=cfg.max_steps,
        recv_recorder=recorder.record_recv if recorder is not None else None,
        recv_schedule=schedule.coordinator if schedule is not None else None,
    )


def _finish_distributed(
    program: Program,
    cfg: RunConfig,
    mode: str,
    result: coord.CoordResult,
    t0: float,
) -> RunOutput:
    return RunOutput(
        program_name=program.name,
        program_digest=program_digest(program),
        mode=mode,
        num_workers=cfg.workers,
        strategy=cfg.strategy,
        final_depth=cfg.final_depth,
        tallies=result.tallies,
        paths=result.paths,
        pool_size=result.pool_size,
        undispatched=result.undispatched,
        truncated=result.truncated,
        wall_ms=int((time.perf_counter() - t0) * 1000),
    )


def run_threads(program: Program, cfg: RunConfig) -> RunOutput:
    t0 = time.perf_counter()
    n = cfg.workers
    recorder = ScheduleRecorder(n) if cfg.record_schedule else None
    schedule = None
    if cfg.replay_schedule:
        schedule = Schedule.from_json(Path(cfg.replay_schedule).read_text())

    hub = proto.QueueHub(n)
    errors: list[BaseException] = []
    threads = []
    for wid in range(n):
        wcfg = _worker_cfg(cfg, wid, recorder, schedule)
        transport = hub.transport_for(wid)

        def body(tr=transport, wc=wcfg):
            try:
                run_worker(tr, program, wc)
            except BaseException as e:  # surfaced after join
                errors.append(e)

        t = threading.Thread(target=body, name=f"tdpart-worker-{wid}", daemon=True)
        t.start()
        threads.append(t)

    try:
        result = run_coordinator(hub, program, _coord_cfg(cfg, recorder, schedule))
    except BaseException:
        hub.broadcast(proto.Terminate())  # let worker threads drain
        raise
    for t in threads:
        t.join(timeout=60)
        if t.is_alive():
            raise proto.ProtocolError(f"worker thread {t.name} failed to stop")
    if errors:
        raise errors[0]
    if recorder is not None:
        Path(cfg.record_schedule).write_text(recorder.schedule().to_json())
    return _finish_distributed(program, cfg, "threads", result, t0)


def run_tcp(program: Program, cfg: RunConfig) -> RunOutput:
    t0 = time.perf_counter()
    n = cfg.workers
    hub = proto.SocketHub(n)
    host, port = hub.address
    errors: list[BaseException] = []
    threads = []

    def connect() -> proto.SocketTransport:
        last: Exception | None = None
        for _ in range(200):
            try:
                s = socket.create_connection((host, port), timeout=10)
                s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                return proto.SocketTransport(s)
            except OSError as e:
                last = e
                time.sleep(0.01)
        raise proto.TransportClosed(f"cannot connect to coordinator: {last}")

    for wid in range(n):
        wcfg = _worker_cfg(cfg, wid, None, None)

        def body(wc=wcfg):
            try:
                run_worker(connect(), program, wc)
            except BaseException as e:
                errors.append(e)

        t = threading.Thread(target=body, name=f"tdpart-worker-{wid}", daemon=True)
        t.start()
        threads.append(t)

    try:
        hub.accept_all()
        result = run_coordinator(hub, program, _coord_cfg(cfg, None, None))
    except BaseException:
        try:
            hub.broadcast(proto.Terminate())
        except proto.ProtocolError:
            pass
        raise
    finally:
        hub.close()
    for t in threads:
        t.join(timeout=60)
        if t.is_alive():
            raise proto.ProtocolError(f"worker thread {t.name} failed to stop")
    if errors:
        raise errors[0]
    return _finish_distributed(program, cfg, "tcp", result, t0)


def run_program(program: Program, cfg: RunConfig) -> RunOutput:
    if cfg.mode != "threads" and (cfg.record_schedule or cfg.replay_schedule):
        raise ValueError("schedule record/replay is a threads-mode feature")
    if cfg.mode == "single":
        return run_single(program, cfg)
    if cfg.mode == "threads":
        return run_threads(program, cfg)
    if cfg.mode == "tcp":
        return run_tcp(program, cfg)
    raise ValueError(f"unknown mode {cfg.mode}")


# ---------------------------------------------------------------------------
# Depth calibration
# ---------------------------------------------------------------------------


def calibrate_depth(
    program: Program,
    timeout_s: float,
    *,
    domain_cap: int = DEFAULT_DOMAIN_CAP,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> int:
    """Deepest fully completed BFS layer within the soft timeout: expand the
    execution tree breadth-first (unbounded depth) and return the depth of
    the last layer whose every state was advanced before time ran out.
    Monotone nondecreasing in the timeout; ~0 yields 0."""
    eng = Engine(program, domain_cap=domain_cap, max_steps=max_steps)
    deadline = time.monotonic() + timeout_s
    eng.deadline = deadline
    stats = EngineStats()
    layer = [eng.initial_state()]
    completed = 0
    depth = 0
    while layer:
        nxt = []
        for s in layer:
            if time.monotonic() > deadline:
                return completed
            r = eng._advance(s, -1, stats)
            if r == "trunc":
                return completed
            if r == "term":
                continue
            _, cond = r
            actives, _ = eng.step_branch(s, cond, {}, 0, -1)
            nxt.extend(actives)
        completed = depth
        depth += 1
        layer = nxt
    return completed


# ---------------------------------------------------------------------------
# CSV report
# ---------------------------------------------------------------------------

REPORT_HEADER = ["kind", "worker", "field", "value"]


def report_rows(out: RunOutput) -> list[list[str]]:
    rows: list[list[str]] = []

    def meta(k: str, v) -> None:
        rows.append(["meta", "", k, str(v)])

    meta("program", out.program_name)
    meta("digest", out.program_digest)
    meta("final_depth", out.final_depth)
    meta("mode", out.mode)
    meta("workers", out.num_workers)
    meta("strategy", out.strategy.kind)
    meta("seed", "" if out.strategy.seed is None else out.strategy.seed)
    meta("pool", out.pool_size)
    meta("undispatched", out.undispatched)

    for wid, t in enumerate(out.tallies):
        def wrow(k: str, v) -> None:
            rows.append(["worker", str(wid), k, str(v)])

        wrow("regions", t.regions)
        wrow("paths", len(t.paths))
        wrow("frontier", t.frontier)
        wrow("states_created", t.states_created)
        wrow("states_suspended", t.states_suspended)
        wrow("solver_queries", t.solver_queries)
        wrow("cache_hits", t.cache_hits)
        wrow("instructions", t.instructions)
        wrow("transfers_in", t.transfers_in)
        wrow("transfers_out", t.transfers_out)
        wrow("truncated", int(t.truncated))
        wrow("wall_ms", t.wall_us // 1000)

    def srow(k: str, v) -> None:
        rows.append(["summary", "", k, str(v)])

    srow("paths", len(out.paths))
    srow("frontier", sum(t.frontier for t in out.tallies))
    srow("solver_queries", sum(t.solver_queries for t in out.tallies))
    srow("cache_hits", sum(t.cache_hits for t in out.tallies))
    srow("transfers", sum(t.transfers_in for t in out.tallies))
    srow("truncated", int(out.truncated))
    srow("path_digest", path_digest(out.paths))
    srow("wall_ms", out.wall_ms)

    for p, c in sorted(Counter(out.paths).items()):
        rows.append(["path", "", p, str(c)])
    return rows


def report_text(out: RunOutput) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    w.writerows(report_rows(out))
    return buf.getvalue()


def write_report(out: RunOutput, path: str | Path) -> None:
    Path(path).write_text(report_text(out))


@dataclass
class ReportData:
    meta: dict[str, str] = field(default_factory=dict)
    workers: dict[int, dict[str, str]] = field(default_factory=dict)
    summary: dict[str, str] = field(default_factory=dict)
    paths: Counter = field(default_factory=Counter)


def _data_from_rows(rows: list[list[str]]) -> ReportData:
    data = ReportData()
    for kind, wid, fieldname, value in rows:
        if kind == "meta":
            data.meta[fieldname] = value
        elif kind == "worker":
            data.workers.setdefault(int(wid), {})[fieldname] = value
        elif kind == "summary":
            data.summary[fieldname] = value
        elif kind == "path":
            data.paths[fieldname] += int(value)
        else:
            raise ValueError(f"unknown report row kind {kind!r}")
    return data


def report_data(out: RunOutput) -> ReportData:
    return _data_from_rows(report_rows(out))


def load_report(path: str | Path) -> ReportData:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != REPORT_HEADER:
        raise ValueError(f"{path}: not a report CSV")
    return _data_from_rows(rows[1:])


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


@dataclass
class VerifyResult:
    ok: bool
    error: str | None = None  # setup mismatch (different program/depth)
    missing: list[tuple[str, int]] = field(default_factory=list)
    extra: list[tuple[str, int]] = field(default_factory=list)
    duplicates: list[str] = field(default_factory=list)

    def lines(self) -> list[str]:
        if self.error:
            return [f"verify error: {self.error}"]
        out = []
        for p, n in self.missing:
            out.append(f"missing path {p or '(empty)'} x{n}")
        for p, n in self.extra:
            out.append(f"extra path {p or '(empty)'} x{n}")
        for p in self.duplicates:
            out.append(f"duplicated path {p or '(empty)'} in candidate")
        out.append("verify: PASS" if self.ok else "verify: FAIL")
        return out


def verify_reports(oracle: ReportData, candidate: ReportData) -> VerifyResult:
    """Path multiset equality plus a no-duplicates check on the candidate."""
    for key in ("digest", "final_depth"):
        if oracle.meta.get(key) != candidate.meta.get(key):
            return VerifyResult(
                ok=False,
                error=f"{key} mismatch: oracle {oracle.meta.get(key)!r} "
                f"vs candidate {candidate.meta.get(key)!r}",
            )
    missing = sorted((oracle.paths - candidate.paths).items())
    extra = sorted((candidate.paths - oracle.paths).items())
    duplicates = sorted(p for p, c in candidate.paths.items() if c > 1)
    ok = not missing and not extra and not duplicates
    return VerifyResult(ok=ok, missing=missing, extra=extra, duplicates=duplicates)


# ---------------------------------------------------------------------------
# Corpus generator
# ---------------------------------------------------------------------------

_ERROR_LABELS = ["overflow", "underflow", "bounds", "guard", "assert_fail"]


def _gen_syms(rng: random.Random, n: int) -> tuple[list[str], list[str]]:
    names = ["x", "y", "z"][:n]
    decls = []
    for nm in names:
        lo = rng.randint(-6, -1)
        hi = rng.randint(1, 6)
        decls.append(f"sym {nm} in [{lo}, {hi}];")
    return names, decls


def _gen_cmp(rng: random.Random, names: list[str]) -> str:
    a = rng.choice(names)
    op = rng.choice(["<", "<=", ">", ">=", "<", "<=", "=="])
    if rng.random() < 0.5 and len(names) > 1:
        b = rng.choice([nm for nm in names if nm != a])
    else:
        b = str(rng.randint(-4, 4))
    return f"{a} {op} {b}"


def _gen_cond(rng: random.Random, names: list[str]) -> str:
    c = _gen_cmp(rng, names)
    if rng.random() < 0.2:
        c = f"({c}) {rng.choice(['and', 'or'])} ({_gen_cmp(rng, names)})"
    if rng.random() < 0.15:
        c = f"!({c})"
    return c


def _gen_assign(rng: random.Random, names: list[str], locals_: list[str]) -> str:
    tgt = rng.choice(locals_)
    srcs = names + locals_
    a = rng.choice(srcs)
    b = rng.choice(srcs + [str(rng.randint(-3, 3))])
    op = rng.choice(["+", "-", "*", "+", "-"])
    return f"{tgt} = {a} {op} {b};"


def _gen_terminal(rng: random.Random, indent: str) -> str:
    if rng.random() < 0.2:
        return f'{indent}error("{rng.choice(_ERROR_LABELS)}");'
    return f"{indent}exit({rng.randint(0, 9)});"


def _gen_narrow(rng: random.Random, name: str) -> str:
    names, decls = _gen_syms(rng, rng.choice([2, 3]))
    locals_ = ["t", "u"]
    lines = [f"program {name};"] + decls
    for v in locals_:
        lines.append(f"{v} = {rng.randint(-2, 2)};")

    def nest(depth: int, indent: str) -> list[str]:
        if depth == 0:
            return [_gen_terminal(rng, indent)]
        out = [f"{indent}if ({_gen_cond(rng, names)}) {{"]
        if rng.random() < 0.6:
            out.append(f"{indent}  {_gen_assign(rng, names, locals_)}")
        out += nest(depth - 1, indent + "  ")
        out.append(f"{indent}}} else {{")
        out += nest(depth - 1, indent + "  ")
        out.append(f"{indent}}}")
        return out

    lines += nest(rng.randint(3, 5), "")
    return "\n".join(lines) + "\n"


def _gen_wide(rng: random.Random, name: str) -> str:
    names, decls = _gen_syms(rng, 3)
    locals_ = ["t", "u"]
    lines = [f"program {name};"] + decls
    for v in locals_:
        lines.append(f"{v} = {rng.randint(-2, 2)};")
    for _ in range(rng.randint(4, 6)):
        lines.append(f"if ({_gen_cond(rng, names)}) {{")
        lines.append(f"  {_gen_assign(rng, names, locals_)}")
        lines.append("} else {")
        lines.append(f"  {_gen_assign(rng, names, locals_)}")
        lines.append("}")
    lines.append("if (t < u) {")
    lines.append("  exit(1);")
    lines.append("} else {")
    lines.append(f"  exit({rng.randint(2, 9)});")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _gen_loop(rng: random.Random, name: str) -> str:
    names, decls = _gen_syms(rng, 2)
    lv, other = names[0], names[1]
    target = rng.randint(4, 6)
    step = rng.choice([1, 1, 2])
    lines = [f"program {name};"] + decls
    lines.append("t = 0;")
    lines.append(f"while ({lv} < {target}) {{")
    lines.append(f"  {lv} = {lv} + {step};")
    lines.append("  t = t + 1;")
    lines.append("}")
    lines.append(f"if ({other} < {rng.randint(-1, 2)}) {{")
    lines.append(f"  exit({rng.randint(0, 4)});")
    lines.append("} else {")
    lines.append(_gen_terminal(rng, "  "))
    lines.append("}")
    return "\n".join(lines) + "\n"


def _gen_mixed(rng: random.Random, name: str) -> str:
    names, decls = _gen_syms(rng, rng.choice([2, 3]))
    lines = [f"program {name};"] + decls
    c0 = rng.randint(-3, 3)
    lines.append(f"c = {c0};")
    lines.append("t = 0;")
    # concrete branch: condition only mentions c, which holds a constant
    lines.append(f"if (c < {rng.randint(-1, 2)}) {{")
    lines.append("  t = t + 1;")
    lines.append("} else {")
    lines.append("  t = t - 1;")
    lines.append("}")
    lines.append(f"if ({_gen_cond(rng, names)}) {{")
    lines.append(f'  error("{rng.choice(_ERROR_LABELS)}");')
    lines.append("} else {")
    lines.append("  t = t + 2;")
    lines.append("}")
    lv = names[-1]
    lines.append(f"while ({lv} < {rng.randint(3, 5)}) {{")
    lines.append(f"  {lv} = {lv} + 1;")
    lines.append("}")
    lines.append(f"exit({rng.randint(0, 9)});")
    return "\n".join(lines) + "\n"


def _gen_big(rng: random.Random, name: str) -> str:
    """Two independent input-driven loops: (span+1)^2 full paths, so a
    20-program corpus always contains programs with well over 100 paths."""
    lines = [f"program {name};"]
    lines.append("sym x in [-5, 5];")
    lines.append("sym y in [-5, 5];")
    lines.append("t = 0;")
    lines.append("while (x < 6) {")
    lines.append("  x = x + 1;")
    lines.append("  t = t + 1;")
    lines.append("}")
    lines.append("while (y < 6) {")
    lines.append("  y = y + 1;")
    lines.append("}")
    lines.append(f"exit({rng.randint(0, 3)});")
    return "\n".join(lines) + "\n"


def generate_program(rng: random.Random, name: str, shape: str) -> str:
    builder = {
        "narrow": _gen_narrow,
        "wide": _gen_wide,
        "loop": _gen_loop,
        "mixed": _gen_mixed,
        "big": _gen_big,
    }[shape]
    return builder(rng, name)


def corpus_shape(i: int) -> str:
    if i % 10 == 5:
        return "big"
    return ["narrow", "wide", "loop", "mixed"][i % 4]


def gen_corpus(seed: int, count: int, out_dir: str | Path) -> list[Path]:
    """Deterministic: the same seed and count produce byte-identical files.
    Every program parses and validates cleanly; loop conditions always
    mention a symbolic input, so the depth bound terminates everything."""
    rng = random.Random(seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for i in range(count):
        name = f"prog_{i:02d}"
        src = generate_program(rng, name, corpus_shape(i))
        prog = lang.parse_program(src)
        diags = lang.validate(prog)
        if diags:
            raise RuntimeError(f"generator produced an invalid program {name}: {diags}")
        p = out / f"{name}.tdp"
        p.write_text(src)
        written.append(p)
    return written


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tdpart")
    sub = ap.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="execute a program's symbolic exploration")
    run.add_argument("--program", required=True)
    run.add_argument("--mode", choices=["single", "threads", "tcp"], default="single")
    run.add_argument("--workers", type=int, default=None)
    run.add_argument("--search", choices=["dfs", "bfs", "rand"], default="dfs")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--max-depth", type=int, default=None)
    run.add_argument("--calibrate-timeout", type=float, default=None)
    run.add_argument("--offload-threshold", type=int,
                     default=worker.DEFAULT_OFFLOAD_THRESHOLD)
    run.add_argument("--report", default=None)
    run.add_argument("--verify", default=None)
    run.add_argument("--time-budget", type=float, default=None)
    run.add_argument("--no-cache", action="store_true")
    run.add_argument("--solver-delay-ms", type=float, default=0.0)
    run.add_argument("--resume-order", choices=["deepest", "list"], default="deepest")
    run.add_argument("--record-schedule", default=None)
    run.add_argument("--replay-schedule", default=None)

    gen = sub.add_parser("gen", help="generate a seeded program corpus")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--count", type=int, required=True)
    gen.add_argument("--out", required=True)
    return ap


def _cmd_run(args) -> int:
    try:
        text = Path(args.program).read_text()
    except OSError as e:
        print(f"error: {e}")
        return 2
    try:
        program = lang.parse_program(text)
    except lang.ParseError as e:
        print(f"error: {args.program}: {e}")
        return 2
    diags = lang.validate(program)
    if diags:
        for d in diags:
            print(f"error: {args.program}: {d}")
        return 2

    if args.calibrate_timeout is not None:
        final_depth = calibrate_depth(program, args.calibrate_timeout)
        print(f"calibrated final depth: {final_depth}")
    elif args.max_depth is not None:
        final_depth = args.max_depth
    else:
        print("error: one of --max-depth or --calibrate-timeout is required")
        return 2
    if final_depth < 0:
        print("error: --max-depth must be nonnegative")
        return 2

    workers = args.workers
    if args.mode == "single":
        workers = 1
    elif workers is None:
        workers = 2
    if workers < 1:
        print("error: --workers must be at least 1")
        return 2
    if (args.record_schedule or args.replay_schedule) and args.mode != "threads":
        print("error: schedule record/replay requires --mode threads")
        return 2

    strategy = Strategy("random", args.seed) if args.search == "rand" else Strategy(args.search)
    cfg = RunConfig(
        mode=args.mode,
        workers=workers,
        strategy=strategy,
        final_depth=final_depth,
        offload_threshold=args.offload_threshold,
        resume_order=args.resume_order,
        cache_enabled=not args.no_cache,
        solver_delay=args.solver_delay_ms / 1000.0,
        time_budget=args.time_budget,
        record_schedule=args.record_schedule,
        replay_schedule=args.replay_schedule,
    )
    try:
        out = run_program(program, cfg)
    except (proto.ProtocolError, ValueError, OSError) as e:
        print(f"error: {e}")
        return 2

    print(
        f"{out.program_name}: mode={out.mode} workers={out.num_workers} "
        f"strategy={out.strategy.kind} final_depth={out.final_depth}"
    )
    print(
        f"paths={len(out.paths)} frontier={sum(t.frontier for t in out.tallies)} "
        f"truncated={'yes' if out.truncated else 'no'} "
        f"undispatched={out.undispatched} wall_ms={out.wall_ms}"
    )
    print(f"path_digest={path_digest(out.paths)}")
    for wid, t in enumerate(out.tallies):
        print(
            f"worker {wid}: regions={t.regions} paths={len(t.paths)} "
            f"queries={t.solver_queries} hits={t.cache_hits} "
            f"in={t.transfers_in} out={t.transfers_out}"
        )
    if args.report:
        write_report(out, args.report)
        print(f"report written to {args.report}")
    if args.verify:
        try:
            oracle = load_report(args.verify)
        except (OSError, ValueError) as e:
            print(f"error: {e}")
            return 2
        result = verify_reports(oracle, report_data(out))
        for line in result.lines():
            print(line)
        if result.error:
            return 2
        return 0 if result.ok else 1
    return 0


def _cmd_gen(args) -> int:
    if args.count < 1:
        print("error: --count must be at least 1")
        return 2
    try:
        written = gen_corpus(args.seed, args.count, args.out)
    except (OSError, RuntimeError) as e:
        print(f"error: {e}")
        return 2
    for p in written:
        print(p)
    print(f"generated {len(written)} programs in {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.cmd == "run":
        return _cmd_run(args)
    return _cmd_gen(args)


if __name__ == "__main__":
    raise SystemExit(main())
