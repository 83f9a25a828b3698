"""Value-learning SVC voltage controller.

The plant is a linear voltage/VAR sensitivity: V = V_nom + k_v * Q_svc + d,
where d is a piecewise-constant disturbance offset. The agent keeps a table of
action values over voltage bins (a one-dimensional state is exactly
representable this way); any object exposing ``greedy_action(voltage)`` can
stand in for the table when rolling out episodes.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels
from .network import Network
from .powerflow import SolverOptions, solve_load_flow


class TrainingDivergenceError(RuntimeError):
    pass


DISTURBANCE_MODELS = ("none", "step", "random_walk")


@dataclass(frozen=True)
class EnvConfig:
    nominal_voltage: float = 1.0
    band_low: float = 0.95
    band_high: float = 1.05
    k_v: float = 0.05 / 1300.0  # pu per MVAR
    q_step: float = 1300.0  # MVAR per action increment
    q_limit: float = 6500.0
    action_levels: int = 1  # actions are -n..n increments
    disturbance_model: str = "none"
    step_time: int = 10
    step_size: float = -0.07
    walk_sigma: float = 0.005
    reset_offset: float = 0.10  # initial offsets drawn from U(-r, r) in training
    episode_length: int = 50
    seed: int = 42
    deviation_weight: float = 1.0
    in_band_bonus: float = 0.5
    n_bins: int = 81
    v_min: float = 0.90
    v_max: float = 1.10

    def __post_init__(self):
        if not self.band_low < self.nominal_voltage < self.band_high:
            raise ValueError("band must bracket the nominal voltage")
        if self.k_v <= 0 or self.q_step <= 0 or self.q_limit < 0:
            raise ValueError("k_v and q_step must be positive, q_limit non-negative")
        if self.disturbance_model not in DISTURBANCE_MODELS:
            raise ValueError(f"disturbance_model must be one of {DISTURBANCE_MODELS}")
        if self.n_bins < 2 or self.v_max <= self.v_min:
            raise ValueError("need at least two voltage bins over a positive span")
        if self.action_levels < 1 or self.episode_length < 1:
            raise ValueError("action_levels and episode_length must be >= 1")

    @property
    def bin_width(self) -> float:
        return (self.v_max - self.v_min) / (self.n_bins - 1)

    @property
    def bin_centers(self) -> np.ndarray:
        return self.v_min + self.bin_width * np.arange(self.n_bins)

    @property
    def actions(self) -> np.ndarray:
        """Action increments in MVAR, ordered by magnitude so ties favour inaction."""
        out = [0.0]
        for k in range(1, self.action_levels + 1):
            out += [-k * self.q_step, k * self.q_step]
        return np.array(out)

    @classmethod
    def from_dict(cls, data: dict) -> EnvConfig:
        return cls(**data)


@dataclass(frozen=True)
class Hyperparameters:
    episodes: int = 500
    learning_rate: float = 0.5
    discount: float = 0.9
    epsilon_initial: float = 1.0
    epsilon_final: float = 0.05
    epsilon_decay: float = 0.99

    def __post_init__(self):
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")
        for name in ("epsilon_initial", "epsilon_final"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0 <= self.discount < 1:
            raise ValueError("discount must lie in [0, 1)")

    def epsilons(self) -> np.ndarray:
        e = self.epsilon_initial * self.epsilon_decay ** np.arange(self.episodes)
        return np.maximum(e, self.epsilon_final)


@dataclass(frozen=True)
class EnvState:
    voltage: float
    svc_q: float = 0.0
    step_index: int = 0
    offset: float = 0.0


def next_offset(config: EnvConfig, offset: float, step_index: int, rng=None) -> float:
    """Disturbance offset in force after ``step_index``."""
    if config.disturbance_model == "step" and step_index == config.step_time:
        return offset + config.step_size
    if config.disturbance_model == "random_walk":
        if rng is None:
            raise ValueError("random_walk disturbances need an rng")
        return offset + rng.normal(0.0, config.walk_sigma)
    return offset


def env_step(state: EnvState, action: float, config: EnvConfig, rng=None) -> tuple[EnvState, float]:
    """Apply an SVC increment; the setpoint is clamped to +/- q_limit."""
    offset = next_offset(config, state.offset, state.step_index + 1, rng)
    q, v, r = kernels.step_dynamics(state.svc_q, float(action), offset, config.k_v, config.q_limit,
                                    config.nominal_voltage, config.band_low, config.band_high,
                                    config.deviation_weight, config.in_band_bonus)
    return EnvState(v, q, state.step_index + 1, offset), r


@dataclass
class Agent:
    config: EnvConfig
    hyper: Hyperparameters
    q_table: np.ndarray

    @property
    def actions(self) -> np.ndarray:
        return self.config.actions

    def state_index(self, voltage: float) -> int:
        c = self.config
        return kernels.voltage_bin(voltage, c.v_min, c.bin_width, c.n_bins)

    def action_values(self, voltage: float) -> np.ndarray:
        return self.q_table[self.state_index(voltage)]

    def greedy_action(self, voltage: float) -> float:
        return float(self.actions[kernels.greedy_index(self.action_values(voltage))])

    def policy(self) -> np.ndarray:
        """Greedy action (MVAR) for every voltage bin."""
        return np.array([self.actions[kernels.greedy_index(row)] for row in self.q_table])

    def to_dict(self) -> dict:
        return {"config": asdict(self.config), "hyperparameters": asdict(self.hyper),
                "q_table": self.q_table.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> Agent:
        return cls(EnvConfig(**data["config"]), Hyperparameters(**data["hyperparameters"]),
                   np.array(data["q_table"], dtype=float))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> Agent:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class TrainingLog:
    episode_returns: np.ndarray
    epsilons: np.ndarray

    def window_mean(self, first: bool, width: int = 50) -> float:
        r = self.episode_returns[:width] if first else self.episode_returns[-width:]
        return float(np.mean(r)) if r.size else math.nan


def _training_draws(config: EnvConfig, hyper: Hyperparameters):
    rng = np.random.default_rng(config.seed)
    n, steps = hyper.episodes, config.episode_length
    n_actions = config.actions.shape[0]
    offsets = np.empty((n, steps + 1))
    offsets[:, 0] = rng.uniform(-config.reset_offset, config.reset_offset, n)
    if config.disturbance_model == "random_walk":
        offsets[:, 1:] = rng.normal(0.0, config.walk_sigma, (n, steps))
        offsets = np.cumsum(offsets, axis=1)
    else:
        offsets[:, 1:] = offsets[:, :1]
        if config.disturbance_model == "step" and 1 <= config.step_time <= steps:
            offsets[:, config.step_time:] += config.step_size
    explore_u = rng.random((n, steps))
    explore_a = rng.integers(0, n_actions, (n, steps))
    return offsets, explore_u, explore_a


def train_agent(config: EnvConfig | None = None, hyper: Hyperparameters | None = None
                ) -> tuple[Agent, TrainingLog]:
    """Epsilon-greedy one-step Q-learning; identical seeds give identical agents."""
    config = config or EnvConfig()
    hyper = hyper or Hyperparameters()
    q_table = np.zeros((config.n_bins, config.actions.shape[0]))
    eps = hyper.epsilons()
    if hyper.episodes == 0:
        return Agent(config, hyper, q_table), TrainingLog(np.zeros(0), eps)
    offsets, explore_u, explore_a = _training_draws(config, hyper)
    returns, bad = kernels.train_q_table(
        q_table, offsets, explore_u, explore_a, eps, config.actions,
        config.k_v, config.q_limit, config.nominal_voltage, config.band_low, config.band_high,
        config.deviation_weight, config.in_band_bonus, config.v_min, config.bin_width,
        hyper.learning_rate, hyper.discount)
    if bad >= 0:
        raise TrainingDivergenceError(
            f"non-finite action value in episode {bad} "
            f"(learning_rate={hyper.learning_rate}, discount={hyper.discount})")
    return Agent(config, hyper, q_table), TrainingLog(np.asarray(returns), eps)


# ---------------------------------------------------------------- evaluation


@dataclass
class EpisodeTrace:
    voltage: list = field(default_factory=list)
    action: list = field(default_factory=list)
    reward: list = field(default_factory=list)
    svc_q: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.voltage)

    def rows(self):
        for k, (v, a, r) in enumerate(zip(self.voltage, self.action, self.reward)):
            yield k, v, a, r


_STEP_RE = re.compile(r"^step:([-+0-9.eE]+)@(\d+)$")


def parse_disturbance(text: str | None) -> list[tuple[int, float]]:
    """``"step:-0.07@10"`` -> [(10, -0.07)]; comma-separate several events."""
    if not text or text == "none":
        return []
    events = []
    for part in text.split(","):
        m = _STEP_RE.match(part.strip())
        if not m:
            raise ValueError(f"bad disturbance {part!r}; expected step:<pu>@<step>")
        events.append((int(m.group(2)), float(m.group(1))))
    return events


class LoadFlowPlant:
    """Voltage at ``monitor_bus`` from a full load flow with the SVC at ``svc_bus``."""

    def __init__(self, network: Network, svc_bus: str, monitor_bus: str, device_id: str = "SVC_RL"):
        self.network = network
        self.svc_bus = svc_bus
        self.monitor_bus = monitor_bus
        self.device_id = device_id

    def voltage(self, svc_q: float, offset: float) -> float:
        from .compensation import apply_svc

        net = apply_svc(self.network, self.svc_bus, svc_q, max(abs(svc_q), 1.0), self.device_id)
        sol = solve_load_flow(net, SolverOptions())
        return float(abs(sol.voltage(self.monitor_bus))) + offset


def evaluate_episode(agent, config: EnvConfig | None = None, disturbances=None, *,
                     steps: int | None = None, plant: LoadFlowPlant | None = None) -> EpisodeTrace:
    """Greedy rollout from nominal voltage with scripted disturbance events.

    ``disturbances`` is a list of (step, delta_pu) events or a string such as
    ``"step:-0.07@10"``. The event at step k is already present in the
    voltage recorded for step k.
    """
    config = config or agent.config
    if isinstance(disturbances, str) or disturbances is None:
        disturbances = parse_disturbance(disturbances)
    events: dict[int, float] = {}
    for k, delta in disturbances:
        events[int(k)] = events.get(int(k), 0.0) + float(delta)
    steps = config.episode_length if steps is None else steps
    trace = EpisodeTrace()
    offset = 0.0
    svc_q = 0.0
    v = plant.voltage(0.0, 0.0) if plant else config.nominal_voltage
    for k in range(steps):
        a = agent.greedy_action(v)
        offset += events.get(k, 0.0)
        if plant is None:
            svc_q, v, r = kernels.step_dynamics(svc_q, a, offset, config.k_v, config.q_limit,
                                                config.nominal_voltage, config.band_low,
                                                config.band_high, config.deviation_weight,
                                                config.in_band_bonus)
        else:
            svc_q = min(max(svc_q + a, -config.q_limit), config.q_limit)
            v = plant.voltage(svc_q, offset)
            r = -config.deviation_weight * abs(v - config.nominal_voltage)
            if config.band_low <= v <= config.band_high:
                r += config.in_band_bonus
        trace.voltage.append(float(v))
        trace.action.append(float(a))
        trace.reward.append(float(r))
        trace.svc_q.append(float(svc_q))
    return trace


def default_config(**overrides) -> EnvConfig:
    return replace(EnvConfig(), **overrides)
