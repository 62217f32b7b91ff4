"""Run configuration: one JSON document drives every subcommand.

Sections: grid, model, obstacle, tasks, mdp, icl, solver, output. The
master seed expands into independent per-stage streams through a
splitmix64 step applied to the seed xor an FNV-1a hash of the stage
name, so stages stay decoupled while the whole run remains reproducible
from a single integer.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .dynamics import BoxBounds, ControlAffineModel, PRESETS, get_preset
from .grid import AxisSpec, Grid3, make_grid
from .reachability import DEFAULT_CFL, DEFAULT_MAX_ITERS, DEFAULT_TOLERANCE, Obstacle
from .tasks import DEFAULT_GOAL_RADIUS, MDPParams

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def _fnv1a(text: str) -> int:
    h = _FNV_OFFSET
    for byte in text.encode():
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(master: int, stage: str) -> int:
    """Per-stage seed: splitmix64(master xor fnv1a(stage)), folded to 63 bits."""
    return _splitmix64((master ^ _fnv1a(stage)) & _MASK64) & ((1 << 63) - 1)


@dataclass
class TaskSamplerConfig:
    count: int = 20
    ring_radius: float = 3.0
    goal_radius: float = DEFAULT_GOAL_RADIUS
    jitter: float = 0.1
    rollouts_per_task: int = 10
    goal_arcs: list[float] | None = None


@dataclass
class ICLSection:
    epochs: int = 5
    epsilon: float = 1e-9
    threshold: float = 0.6
    penalty: float = 500.0
    temperature: float = 0.5


@dataclass
class SolverConfig:
    tolerance: float = DEFAULT_TOLERANCE
    cfl: float = DEFAULT_CFL
    max_iters: int = DEFAULT_MAX_ITERS


@dataclass
class RunConfig:
    grid: dict = field(default_factory=lambda: {
        "x": {"lo": -4.0, "hi": 4.0, "count": 61},
        "y": {"lo": -4.0, "hi": 4.0, "count": 61},
        "theta": {"count": 31},
    })
    model: dict = field(default_factory=lambda: {"preset": "non_agile"})
    obstacle: dict = field(default_factory=lambda: {"center": [0.0, 0.0], "radius": 1.0})
    tasks: TaskSamplerConfig = field(default_factory=TaskSamplerConfig)
    mdp: MDPParams = field(default_factory=MDPParams)
    icl: ICLSection = field(default_factory=ICLSection)
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: int = 1
    output: str = "out"
    threads: int = 1

    def build_grid(self) -> Grid3:
        g = self.grid
        return make_grid(
            nx=g["x"]["count"], ny=g["y"]["count"], ntheta=g["theta"]["count"],
            x_lo=g["x"]["lo"], x_hi=g["x"]["hi"],
            y_lo=g["y"]["lo"], y_hi=g["y"]["hi"],
        )

    def build_model(self) -> ControlAffineModel:
        m = self.model
        if "preset" in m:
            if m["preset"] not in PRESETS:
                raise ValueError(f"unknown model preset {m['preset']!r}")
            return get_preset(m["preset"])
        return ControlAffineModel(
            v_nominal=m["v_nominal"],
            action_bounds=BoxBounds(tuple(m["action_lo"]), tuple(m["action_hi"])),
            disturbance_bounds=BoxBounds(tuple(m["disturbance_lo"]),
                                         tuple(m["disturbance_hi"])),
            name=m.get("name", "custom"),
        )

    def model_name(self) -> str:
        return self.model.get("preset", self.model.get("name", "custom"))

    def build_obstacle(self) -> Obstacle:
        return Obstacle(center=tuple(self.obstacle["center"]),
                        radius=self.obstacle["radius"])

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        cfg = cls()
        for key in ("grid", "model", "obstacle"):
            if key in data:
                setattr(cfg, key, data[key])
        if "tasks" in data:
            cfg.tasks = TaskSamplerConfig(**data["tasks"])
        if "mdp" in data:
            cfg.mdp = MDPParams(**data["mdp"])
        if "icl" in data:
            cfg.icl = ICLSection(**data["icl"])
        if "solver" in data:
            cfg.solver = SolverConfig(**data["solver"])
        for key in ("seed", "output", "threads"):
            if key in data:
                setattr(cfg, key, data[key])
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    def validate(self) -> None:
        self.build_grid()
        self.build_model()
        self.build_obstacle()
        if self.icl.epochs < 1:
            raise ValueError("icl.epochs must be >= 1")
        if self.icl.epsilon <= 0:
            raise ValueError("icl.epsilon must be positive")
        if not 0 < self.solver.cfl <= 1:
            raise ValueError("solver.cfl must lie in (0, 1]")
        if self.solver.tolerance <= 0:
            raise ValueError("solver.tolerance must be positive")
        if self.mdp.dt <= 0 or self.mdp.horizon < 1:
            raise ValueError("mdp.dt must be positive and horizon >= 1")
        if self.tasks.count < 1:
            raise ValueError("tasks.count must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
