"""In-process simulation of the federated round protocol.

Each :class:`Agent` owns exactly one measurement vector and answers
broadcasts with a local gradient step.  The :class:`ServerState` only ever
sees iterates and scalars.  Arithmetic at the server runs in agent-index
order, so a round gives the same bits whatever the worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .operators import CouplingOperator, RadonOperator
from .projection import project_onto_W

TO_AGENT = "to-agent"
TO_SERVER = "to-server"
SERVER_MODES = ("firm", "firmplus", "fedpgd")


class ProtocolError(RuntimeError):
    """A round could not be completed (missing or malformed payloads)."""


@dataclass(frozen=True)
class RoundMessage:
    direction: str
    agent: int
    payload: np.ndarray
    alpha: float
    k: int = 0
    t: int = 0
    loss: float | None = None  # ||A w_in - b_i||^2 reported with the reply
    seconds: float = 0.0

    def __post_init__(self):
        if self.direction not in (TO_AGENT, TO_SERVER):
            raise ValueError(f"unknown direction {self.direction!r}")
        payload = np.asarray(self.payload, dtype=np.float64)
        if payload.ndim != 1:
            raise ValueError("payload must be a single iterate vector")
        object.__setattr__(self, "payload", payload)


class Agent:
    """One data owner.  The measurement vector is private; there is no accessor."""

    __slots__ = ("index", "A", "__b")

    def __init__(self, index: int, A: RadonOperator, b: np.ndarray):
        b = np.asarray(b, dtype=np.float64)
        if b.shape != (A.m,):
            raise ValueError(f"agent {index}: data length {b.shape} does not match operator rows {A.m}")
        self.index = index
        self.A = A
        self.__b = b.copy()

    def _residual(self, w: np.ndarray) -> np.ndarray:
        return self.A.forward(w) - self.__b

    def loss(self, w: np.ndarray) -> float:
        r = self._residual(w)
        return float(np.dot(r, r))

    def gradient(self, w: np.ndarray) -> np.ndarray:
        return 2.0 * self.A.adjoint(self._residual(w))

    def local_step(self, w_in: np.ndarray, alpha: float) -> np.ndarray:
        """``v_i = w_in - alpha * 2 A^T (A w_in - b_i)``."""
        v, _ = self._step(w_in, alpha)
        return v

    def _step(self, w_in, alpha):
        if alpha < 0:
            raise ValueError("step size must be nonnegative")
        w_in = np.asarray(w_in, dtype=np.float64)
        r = self._residual(w_in)
        v = w_in - alpha * (2.0 * self.A.adjoint(r))
        return v, float(np.dot(r, r))

    def handle(self, msg: RoundMessage) -> RoundMessage:
        if msg.direction != TO_AGENT or msg.agent != self.index:
            raise ProtocolError(f"agent {self.index} received a message for agent {msg.agent}")
        start = time.perf_counter()
        v, loss = self._step(msg.payload, msg.alpha)
        return RoundMessage(TO_SERVER, self.index, v, msg.alpha, msg.k, msg.t, loss,
                            time.perf_counter() - start)


def firm_server_ops(N: int, n: int, dual: bool = False) -> int:
    """Elementwise flops of one aggregation, audited against :func:`server_firm_step`."""
    # y: (N-1) scalings + (N-2) additions; x: add + halve; x - y; z_i: scale + add
    # for i < N; clip on every entry.
    ops = ((N - 1) + (N - 2) + 2 + 1 + 2 * (N - 1) + N) * n
    if dual:
        # eta * mu, then c_i * (eta mu) and an addition for i < N, one subtraction for z_N
        ops += (1 + 2 * (N - 1) + 1) * n
    return ops


def server_firm_step(D: CouplingOperator, v: np.ndarray, mu: np.ndarray | None = None,
                     eta: float = 0.0) -> np.ndarray:
    """Aggregate local solutions: average, redistribute the disagreement, clip.

    ``y = sum c_i v_i``, ``x = (y + v_N) / 2``, ``z_i = v_i + c_i (x - y)`` and
    ``z_N = x``; with a multiplier ``mu`` the dual shift ``eta * mu`` is added to
    ``z_i`` with weight ``c_i`` and subtracted from ``z_N``.
    """
    c = D.weights
    y = c[0] * v[0]
    for i in range(1, len(c)):
        y = y + c[i] * v[i]
    x = 0.5 * (y + v[-1])
    gap = x - y
    z = np.empty_like(v)
    for i in range(len(c)):
        z[i] = v[i] + c[i] * gap
    z[-1] = x
    if mu is not None:
        shift = eta * mu
        for i in range(len(c)):
            z[i] = z[i] + c[i] * shift
        z[-1] = x - shift
    np.maximum(z, 0.0, out=z)
    return z


@dataclass
class ServerState:
    """Aggregator.  Holds the coupling operator, schedule counters and (FIRM+) the multiplier."""

    coupling: CouplingOperator
    mode: str = "firm"
    eta: float = 0.0
    k: int = 1
    t: int = 0
    mu: np.ndarray | None = None
    projection_tol: float = 1e-10
    projection_max_iter: int = 100_000
    last_ops: int = 0
    total_ops: int = 0
    last_seconds: float = 0.0
    projection_failures: int = 0
    _inbox: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.mode not in SERVER_MODES:
            raise ValueError(f"unknown server mode {self.mode!r}")
        if self.mode == "firmplus" and self.mu is None:
            self.mu = np.zeros(self.coupling.block_length)

    def receive(self, msg: RoundMessage) -> None:
        if msg.direction != TO_SERVER:
            raise ProtocolError("server received a message addressed to an agent")
        if msg.payload.shape != (self.coupling.block_length,):
            raise ProtocolError(f"agent {msg.agent} sent a payload of shape {msg.payload.shape}")
        self._inbox[msg.agent] = msg.payload

    def aggregate(self) -> np.ndarray:
        N = self.coupling.block_count
        missing = [i for i in range(N) if i not in self._inbox]
        if missing:
            self._inbox.clear()
            raise ProtocolError(f"round ({self.k}, {self.t}): missing payload from agent {missing[0]}")
        v = np.vstack([self._inbox[i] for i in range(N)])
        self._inbox.clear()
        start = time.perf_counter()
        if self.mode == "fedpgd":
            res = project_onto_W(self.coupling, v, self.projection_tol, self.projection_max_iter)
            out, ops = res.w, res.ops
            if not res.converged:
                self.projection_failures += 1
        else:
            dual = self.mode == "firmplus"
            out = server_firm_step(self.coupling, v, self.mu if dual else None, self.eta)
            ops = firm_server_ops(N, self.coupling.block_length, dual)
        self.last_seconds = time.perf_counter() - start
        self.last_ops = ops
        self.total_ops += ops
        return out

    def update_dual(self, u: np.ndarray, eta: float) -> None:
        """Multiplier step ``mu <- mu + D u / (2 eta)`` at an outer-loop boundary."""
        self.mu = self.mu + self.coupling.apply(u) / (2.0 * eta)


def server_cost_counter(state: ServerState) -> int:
    return state.last_ops


@dataclass
class RoundResult:
    w: np.ndarray
    losses: np.ndarray  # per-agent loss at the broadcast iterate
    agent_seconds: np.ndarray
    server_seconds: float
    server_ops: int


def run_round(agents: list[Agent], server: ServerState, w: np.ndarray, alpha: float,
              executor: Executor | None = None) -> RoundResult:
    """Broadcast ``w_i`` and ``alpha``, gather local steps, aggregate."""
    if len(agents) != server.coupling.block_count:
        raise ProtocolError(f"{len(agents)} agents for {server.coupling.block_count} blocks")
    outgoing = [RoundMessage(TO_AGENT, a.index, w[a.index], alpha, server.k, server.t) for a in agents]
    if executor is None:
        replies = [a.handle(m) for a, m in zip(agents, outgoing)]
    else:
        futures = [executor.submit(a.handle, m) for a, m in zip(agents, outgoing)]
        replies = [f.result() for f in futures]
    replies.sort(key=lambda r: r.agent)
    for r in replies:
        server.receive(r)
    w_new = server.aggregate()
    return RoundResult(w_new, np.array([r.loss for r in replies]),
                       np.array([r.seconds for r in replies]), server.last_seconds, server.last_ops)


class Federation:
    """Agents plus a server, with an optional worker pool for the local steps."""

    def __init__(self, A: RadonOperator, measurements: np.ndarray, coupling: CouplingOperator,
                 mode: str = "firm", workers: int = 1, round_hook=None, **server_kw):
        self.round_hook = round_hook
        self.agents = [Agent(i, A, b) for i, b in enumerate(measurements)]
        self.server = ServerState(coupling, mode, **server_kw)
        self.workers = int(workers)
        self._pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None

    def round(self, w: np.ndarray, alpha: float) -> RoundResult:
        res = run_round(self.agents, self.server, w, alpha, self._pool)
        if self.round_hook is not None:
            self.round_hook({"k": self.server.k, "t": self.server.t, "eta": alpha,
                             "agent_seconds": res.agent_seconds,
                             "server_seconds": res.server_seconds, "server_ops": res.server_ops})
        return res

    def losses(self, w: np.ndarray) -> np.ndarray:
        return np.array([a.loss(wi) for a, wi in zip(self.agents, w)])

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
