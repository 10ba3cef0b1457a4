"""Gated response: tabular Q-learning action selection, simulation-first
adapters, an append-only audit journal, and rollback.

Every adapter keeps a pure in-memory state machine (blocked ips, suspended
accounts, a policy snapshot stack, locked zones), so rollback correctness is
checkable by structural equality without any external system. Journal lines
are the audit log; a rollback appends its own line rather than rewriting
history.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import IO

import numpy as np

from .core import Duration, SentinelError, Timestamp
from .reasoner import ThreatClass


class MissingLabel(SentinelError):
    """Training-mode reward requested for an unlabeled window."""


class AlreadyRolledBack(SentinelError):
    """The journal entry was rolled back before."""


class Irreversible(SentinelError):
    """The journal entry has no inverse."""


class ActionKind(Enum):
    # Enum order is the deterministic tie-break order for greedy selection.
    NO_ACTION = "NoAction"
    LOG_ONLY = "LogOnly"
    BLOCK_IP = "BlockIp"
    SUSPEND_ACCOUNT = "SuspendAccount"
    RECONFIGURE_POLICY = "ReconfigurePolicy"
    ESCALATE = "Escalate"
    LOCKDOWN = "Lockdown"


ACTION_ORDER = tuple(ActionKind)

# Actions that change system state; passive observation is never penalized
# as a false positive.
ACTIVE_ACTIONS = frozenset(
    {
        ActionKind.BLOCK_IP,
        ActionKind.SUSPEND_ACCOUNT,
        ActionKind.RECONFIGURE_POLICY,
        ActionKind.ESCALATE,
        ActionKind.LOCKDOWN,
    }
)

MITIGATIONS: dict[ThreatClass, frozenset[ActionKind]] = {
    ThreatClass.INTRUSION: frozenset({ActionKind.BLOCK_IP, ActionKind.SUSPEND_ACCOUNT}),
    ThreatClass.PHYSICAL_BREACH: frozenset({ActionKind.LOCKDOWN, ActionKind.ESCALATE}),
    ThreatClass.COORDINATED_ATTACK: frozenset(
        {ActionKind.BLOCK_IP, ActionKind.LOCKDOWN, ActionKind.ESCALATE}
    ),
}

_REQUIRED_PARAM = {
    ActionKind.BLOCK_IP: "ip",
    ActionKind.SUSPEND_ACCOUNT: "account",
    ActionKind.RECONFIGURE_POLICY: "policy_id",
    ActionKind.LOCKDOWN: "zone",
}


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    params: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        required = _REQUIRED_PARAM.get(self.kind)
        params = dict(self.params)
        if required and not params.get(required):
            raise SentinelError(f"{self.kind.value} requires parameter {required!r}")
        if self.kind is ActionKind.BLOCK_IP:
            import ipaddress

            try:
                ipaddress.IPv4Address(params["ip"])
            except ValueError as exc:
                raise SentinelError(f"BlockIp needs a parseable ip: {params['ip']!r}") from exc

    @property
    def param_dict(self) -> dict[str, str]:
        return dict(self.params)

    @classmethod
    def of(cls, kind: ActionKind, **params: str) -> Action:
        return cls(kind=kind, params=tuple(sorted(params.items())))


@dataclass(frozen=True)
class PolicyState:
    """Tabular state: fused-score decile x hypothesis class x recency flag."""

    score_bucket: int
    hypothesis_class: ThreatClass
    recent_action: bool

    def __post_init__(self) -> None:
        if not 0 <= self.score_bucket <= 9:
            raise SentinelError(f"score_bucket must be in 0..9, got {self.score_bucket}")

    @classmethod
    def from_fused(cls, fused_score: float, hypothesis_class: ThreatClass,
                   recent_action: bool) -> PolicyState:
        return cls(min(9, int(fused_score * 10)), hypothesis_class, recent_action)

    def key(self) -> str:
        return f"{self.score_bucket}|{self.hypothesis_class.value}|{int(self.recent_action)}"


class QTable:
    """Map (state, action) -> value with epsilon-greedy selection.

    States may be any hashable (the pipeline uses PolicyState; tests use toy
    MDP states). Unseen pairs default to 0; greedy ties break by action order.
    """

    def __init__(self, actions=ACTION_ORDER, learning_rate: float = 0.1,
                 discount: float = 0.9, epsilon: float = 0.1):
        if not 0.0 < learning_rate <= 1.0:
            raise SentinelError("learning_rate must be in (0,1]")
        if not 0.0 <= discount < 1.0:
            raise SentinelError("discount must be in [0,1)")
        self.actions = tuple(actions)
        self.learning_rate = learning_rate
        self.discount = discount
        self.epsilon = epsilon
        self.values: dict[tuple, float] = {}

    def q(self, state, action) -> float:
        return self.values.get((state, action), 0.0)

    def greedy(self, state):
        best = self.actions[0]
        best_q = self.q(state, best)
        for action in self.actions[1:]:
            v = self.q(state, action)
            if v > best_q:
                best, best_q = action, v
        return best

    def max_q(self, state) -> float:
        return max(self.q(state, a) for a in self.actions)

    def to_dict(self) -> dict:
        entries = {}
        for (state, action), v in self.values.items():
            state_key = state.key() if isinstance(state, PolicyState) else str(state)
            entries[f"{state_key}@{action.value}"] = v
        return {
            "kind": "qtable",
            "version": 1,
            "learning_rate": self.learning_rate,
            "discount": self.discount,
            "epsilon": self.epsilon,
            "entries": dict(sorted(entries.items())),
        }

    @classmethod
    def from_dict(cls, d: dict) -> QTable:
        table = cls(
            learning_rate=float(d["learning_rate"]),
            discount=float(d["discount"]),
            epsilon=float(d["epsilon"]),
        )
        kinds = {k.value: k for k in ActionKind}
        classes = {c.value: c for c in ThreatClass}
        for key, v in d["entries"].items():
            state_key, action_name = key.rsplit("@", 1)
            bucket, klass, recent = state_key.split("|")
            state = PolicyState(int(bucket), classes[klass], bool(int(recent)))
            table.values[(state, kinds[action_name])] = float(v)
        return table


def select_action(q: QTable, state, rng: np.random.Generator):
    """Epsilon-greedy: exploit the argmax, explore uniformly with prob eps."""
    if q.epsilon > 0.0 and rng.uniform() < q.epsilon:
        return q.actions[int(rng.integers(len(q.actions)))]
    return q.greedy(state)


def q_update(q: QTable, state, action, reward: float, next_state=None) -> float:
    """One Watkins update; returns the new cell value.

    next_state None means terminal (no bootstrap term).
    """
    bootstrap = q.max_q(next_state) if next_state is not None else 0.0
    old = q.q(state, action)
    td = reward + q.discount * bootstrap - old
    new = old + q.learning_rate * td
    q.values[(state, action)] = new
    return new


def compute_reward(
    outcome: ThreatClass | None,
    action_kind: ActionKind,
    elapsed: Duration,
    latency_penalty: float = 0.01,
) -> float:
    """Reward correct mitigations, penalize noise, and charge for slowness.

    The latency term applies whenever some action was taken; doing nothing is
    free but costs -0.5 if the window was a real threat.
    """
    if outcome is None:
        raise MissingLabel("training reward needs a ground-truth label")
    latency = 0.0 if action_kind is ActionKind.NO_ACTION else latency_penalty * elapsed.seconds
    if outcome in MITIGATIONS:
        if action_kind in MITIGATIONS[outcome]:
            return 1.0 - latency
        if action_kind is ActionKind.NO_ACTION:
            return -0.5
        return 0.0 - latency
    # benign window
    if action_kind in ACTIVE_ACTIONS:
        return -1.0 - latency
    return 0.0 - latency


class ExecutionResult(Enum):
    APPLIED = "Applied"
    FAILED = "Failed"
    SIMULATED = "Simulated"


@dataclass(frozen=True)
class InverseAction:
    """Exact undo for one journal entry, capturing prior state as needed."""

    kind: str  # UnblockIp | RestoreAccount | RestorePolicy | Unlock | Noop
    params: tuple[tuple[str, str], ...] = ()

    @property
    def param_dict(self) -> dict[str, str]:
        return dict(self.params)


class SimulationAdapters:
    """In-memory state machines standing in for firewall / IAM / policy / zone
    controllers. fail_kinds injects adapter failures for tests."""

    def __init__(self, fail_kinds: frozenset[ActionKind] = frozenset()):
        self.blocked_ips: set[str] = set()
        self.suspended_accounts: set[str] = set()
        self.policy_stack: list[str] = ["baseline"]
        self.locked_zones: set[str] = set()
        self.fail_kinds = fail_kinds

    def snapshot(self) -> dict:
        return {
            "blocked_ips": sorted(self.blocked_ips),
            "suspended_accounts": sorted(self.suspended_accounts),
            "policy_stack": list(self.policy_stack),
            "locked_zones": sorted(self.locked_zones),
        }

    def apply(self, action: Action) -> tuple[bool, InverseAction | None]:
        """Mutate state; return (ok, inverse). Failed actions change nothing."""
        if action.kind in self.fail_kinds:
            return False, None
        params = action.param_dict
        if action.kind is ActionKind.BLOCK_IP:
            ip = params["ip"]
            if ip in self.blocked_ips:
                return True, InverseAction("Noop")
            self.blocked_ips.add(ip)
            return True, InverseAction("UnblockIp", (("ip", ip),))
        if action.kind is ActionKind.SUSPEND_ACCOUNT:
            account = params["account"]
            if account in self.suspended_accounts:
                return True, InverseAction("Noop")
            self.suspended_accounts.add(account)
            return True, InverseAction("RestoreAccount", (("account", account),))
        if action.kind is ActionKind.RECONFIGURE_POLICY:
            prior = json.dumps(self.policy_stack)
            self.policy_stack.append(params["policy_id"])
            return True, InverseAction("RestorePolicy", (("stack", prior),))
        if action.kind is ActionKind.LOCKDOWN:
            zone = params["zone"]
            if zone in self.locked_zones:
                return True, InverseAction("Noop")
            self.locked_zones.add(zone)
            return True, InverseAction("Unlock", (("zone", zone),))
        # NoAction, LogOnly, Escalate: no state change, no inverse.
        return True, None

    def apply_inverse(self, inverse: InverseAction) -> None:
        params = inverse.param_dict
        if inverse.kind == "UnblockIp":
            self.blocked_ips.discard(params["ip"])
        elif inverse.kind == "RestoreAccount":
            self.suspended_accounts.discard(params["account"])
        elif inverse.kind == "RestorePolicy":
            self.policy_stack = list(json.loads(params["stack"]))
        elif inverse.kind == "Unlock":
            self.locked_zones.discard(params["zone"])
        elif inverse.kind != "Noop":
            raise SentinelError(f"unknown inverse kind {inverse.kind!r}")


@dataclass
class JournalEntry:
    seq: int
    ts: Timestamp
    state_key: str | None
    action: Action
    result: ExecutionResult
    inverse: InverseAction | None
    rolled_back: bool = False
    entry_kind: str = "action"  # action | rollback
    target_seq: int | None = None

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "ts_micros": self.ts.micros,
            "state": self.state_key,
            "action": {"kind": self.action.kind.value, "params": self.action.param_dict},
            "result": self.result.value,
            "inverse": (
                None
                if self.inverse is None
                else {"kind": self.inverse.kind, "params": self.inverse.param_dict}
            ),
            "rolled_back": self.rolled_back,
            "entry_kind": self.entry_kind,
            "target_seq": self.target_seq,
        }


class Journal:
    """Append-only action log; optionally mirrored to a JSONL file."""

    def __init__(self, sink: IO[str] | None = None):
        self.entries: list[JournalEntry] = []
        self._sink = sink
        self._next_seq = 1

    def append(self, entry_kwargs: dict) -> JournalEntry:
        entry = JournalEntry(seq=self._next_seq, **entry_kwargs)
        self._next_seq += 1
        self.entries.append(entry)
        if self._sink is not None:
            self._sink.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")
        return entry

    def find(self, seq: int) -> JournalEntry:
        for entry in self.entries:
            if entry.seq == seq:
                return entry
        raise SentinelError(f"no journal entry with seq {seq}")

    def write_file(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.entries:
                fh.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")


def execute_action(
    action: Action,
    adapters: SimulationAdapters,
    journal: Journal,
    ts: Timestamp,
    state_key: str | None = None,
    simulate: bool = True,
) -> JournalEntry:
    """Run the action through its adapter and journal the outcome.

    Adapter failure is recorded as Failed with no inverse; the pipeline keeps
    going either way.
    """
    ok, inverse = adapters.apply(action)
    if not ok:
        result = ExecutionResult.FAILED
    elif simulate:
        result = ExecutionResult.SIMULATED
    else:
        result = ExecutionResult.APPLIED
    return journal.append(
        dict(
            ts=ts,
            state_key=state_key,
            action=action,
            result=result,
            inverse=inverse,
            entry_kind="action",
        )
    )


def rollback(
    journal: Journal,
    seq: int,
    adapters: SimulationAdapters,
    ts: Timestamp | None = None,
) -> JournalEntry:
    """Undo a journaled action through the same adapters.

    The original entry is flagged; the undo itself is appended as a new entry
    so a replay of the journal reconstructs the same final state.
    """
    entry = journal.find(seq)
    if entry.entry_kind != "action":
        raise Irreversible(f"entry {seq} is not an action")
    if entry.rolled_back:
        raise AlreadyRolledBack(f"entry {seq} already rolled back")
    if entry.inverse is None:
        raise Irreversible(f"entry {seq} has no inverse")
    adapters.apply_inverse(entry.inverse)
    entry.rolled_back = True
    inverse_as_action = Action(ActionKind.NO_ACTION)
    return journal.append(
        dict(
            ts=ts if ts is not None else entry.ts,
            state_key=entry.state_key,
            action=inverse_as_action,
            result=entry.result,
            inverse=entry.inverse,
            entry_kind="rollback",
            target_seq=seq,
        )
    )


def replay_journal(entries: list[JournalEntry]) -> SimulationAdapters:
    """Rebuild adapter state from a journal: apply successful actions in order
    and re-apply recorded inverses for rollback entries."""
    adapters = SimulationAdapters()
    for entry in entries:
        if entry.entry_kind == "rollback":
            if entry.inverse is not None:
                adapters.apply_inverse(entry.inverse)
        elif entry.result is not ExecutionResult.FAILED:
            adapters.apply(entry.action)
    return adapters
