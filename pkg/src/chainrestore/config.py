"""Run configuration read from an INI file.

Example::

    [chain]
    n_total = 42
    boundary = 0.3005, 0.5311
    coupling_mode = all_to_all_dipole

    [partition]
    n_sender = 2
    n_extended_receiver = 4

    [time]
    t0 = search
    t_max = 100
    grid_step = 0.01

    [optimize]
    objective = 00,01; 00,10; 00,11; 01,11; 10,11
    restarts = 1000
    seed = 0

Either ``couplings`` (all ``n_total - 1`` bonds) or ``boundary`` (mirror
symmetric edge bonds, the rest 1) may be given.  Every key is optional
except ``chain.n_total``.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .basis import Partition
from .hamiltonian import ChainSpec, CouplingMode
from .restorer import higher_order_pairs, label_pair, parse_pair, zero_order_offdiag_pairs
from .zeroorder import ZeroOrderMode


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class TimeConfig:
    t0: float | None = None  # None means search
    t_max: float = 100.0
    grid_step: float = 0.01


@dataclass(frozen=True)
class OptimizeConfig:
    objective: tuple[str, ...] = ()
    restarts: int = 1000
    seed: int = 0
    ascent_steps: int = 50
    fix_objective: bool = True
    phase2_restarts: int | None = None
    histogram_bins: int = 20


@dataclass(frozen=True)
class ZeroOrderConfig:
    mode: ZeroOrderMode = ZeroOrderMode.ALMOST_PERFECT
    rho00: float = 0.0
    restore_offdiag: bool = False
    free_offdiag: tuple[str, ...] = ()
    solution: Path | None = None


@dataclass(frozen=True)
class SimulateConfig:
    solution: Path | None = None
    trials: int = 10
    higher_scale: float = 0.05


@dataclass(frozen=True)
class VerifyConfig:
    n_spins: tuple[int, ...] = (4, 5, 6)
    trials: int = 20
    restarts: int = 5


@dataclass(frozen=True)
class RunConfig:
    chain: ChainSpec
    partition: Partition
    time: TimeConfig = field(default_factory=TimeConfig)
    optimize: OptimizeConfig = field(default_factory=OptimizeConfig)
    zero_order: ZeroOrderConfig = field(default_factory=ZeroOrderConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)

    def objective_pairs(self) -> list[tuple[int, int]]:
        n = self.partition.n
        if not self.optimize.objective:
            return higher_order_pairs(n)
        return [parse_pair(o, n) for o in self.optimize.objective]


def _split_list(text: str, sep: str = ",") -> list[str]:
    return [x.strip() for x in text.split(sep) if x.strip()]


class _Reader:
    def __init__(self, parser: configparser.ConfigParser):
        self.p = parser

    def _raw(self, section: str, key: str):
        if self.p.has_option(section, key):
            return self.p.get(section, key).strip()
        return None

    def get(self, section: str, key: str, conv, default):
        raw = self._raw(section, key)
        if raw is None or raw == "":
            return default
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{section}.{key}", str(exc)) from None

    def boolean(self, section: str, key: str, default: bool) -> bool:
        raw = self._raw(section, key)
        if raw is None or raw == "":
            return default
        if raw.lower() in configparser.ConfigParser.BOOLEAN_STATES:
            return configparser.ConfigParser.BOOLEAN_STATES[raw.lower()]
        raise ConfigError(f"{section}.{key}", f"not a boolean: {raw!r}")


_KNOWN = {
    "chain": {"n_total", "couplings", "boundary", "coupling_mode"},
    "partition": {"n_sender", "n_receiver", "n_extended_receiver", "receiver_reversed"},
    "time": {"t0", "t_max", "grid_step"},
    "optimize": {"objective", "restarts", "seed", "ascent_steps", "fix_objective", "phase2_restarts", "histogram_bins"},
    "zero_order": {"mode", "rho00", "restore_offdiag", "free_offdiag", "solution"},
    "simulate": {"solution", "trials", "higher_scale"},
    "verify": {"n_spins", "trials", "restarts"},
}


def _positive(path: str, value, allow_zero: bool = False):
    if value < 0 or (value == 0 and not allow_zero):
        raise ConfigError(path, f"must be {'non-negative' if allow_zero else 'positive'}, got {value}")
    return value


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc)) from None
    for section in parser.sections():
        if section not in _KNOWN:
            raise ConfigError(section, "unknown section")
        for key in parser[section]:
            if key not in _KNOWN[section]:
                raise ConfigError(f"{section}.{key}", "unknown key")
    r = _Reader(parser)
    base_dir = base_dir or Path.cwd()

    def path_or_none(raw: str) -> Path:
        p = Path(raw)
        return p if p.is_absolute() else base_dir / p

    n_total = r.get("chain", "n_total", int, None)
    if n_total is None:
        raise ConfigError("chain.n_total", "required")
    mode = r.get("chain", "coupling_mode", CouplingMode, CouplingMode.ALL_TO_ALL_DIPOLE)
    couplings = r.get("chain", "couplings", lambda s: [float(x) for x in _split_list(s)], None)
    boundary = r.get("chain", "boundary", lambda s: [float(x) for x in _split_list(s)], None)
    try:
        if couplings is not None and boundary is not None:
            raise ConfigError("chain", "give either couplings or boundary, not both")
        if couplings is not None:
            chain = ChainSpec(n_total, tuple(couplings), mode)
        else:
            chain = ChainSpec.boundary_adjusted(n_total, boundary or (), mode)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("chain", str(exc)) from None

    n_sender = r.get("partition", "n_sender", int, 2)
    try:
        partition = Partition(
            n_total,
            n_sender,
            r.get("partition", "n_receiver", int, n_sender),
            r.get("partition", "n_extended_receiver", int, min(2 * n_sender, n_total - n_sender)),
            r.boolean("partition", "receiver_reversed", True),
        )
    except ValueError as exc:
        raise ConfigError("partition", str(exc)) from None

    t0_raw = r.get("time", "t0", str, "search")
    try:
        t0 = None if t0_raw.lower() == "search" else float(t0_raw)
    except ValueError:
        raise ConfigError("time.t0", f"expected a number or 'search', got {t0_raw!r}") from None
    time = TimeConfig(
        t0,
        _positive("time.t_max", r.get("time", "t_max", float, 100.0)),
        _positive("time.grid_step", r.get("time", "grid_step", float, 0.01)),
    )

    n = partition.n
    objective = tuple(r.get("optimize", "objective", lambda s: _split_list(s, ";"), []))
    allowed = set(higher_order_pairs(n) + zero_order_offdiag_pairs(n))
    for o in objective:
        try:
            pair = parse_pair(o, n)
        except ValueError as exc:
            raise ConfigError("optimize.objective", str(exc)) from None
        if pair not in allowed:
            raise ConfigError("optimize.objective", f"{o} is not a scale-factor entry for {n} qubits")
    phase2 = r.get("optimize", "phase2_restarts", int, None)
    optimize = OptimizeConfig(
        tuple(label_pair(n, *parse_pair(o, n)) for o in objective),
        _positive("optimize.restarts", r.get("optimize", "restarts", int, 1000)),
        r.get("optimize", "seed", int, 0),
        _positive("optimize.ascent_steps", r.get("optimize", "ascent_steps", int, 50), allow_zero=True),
        r.boolean("optimize", "fix_objective", True),
        None if phase2 is None else _positive("optimize.phase2_restarts", phase2, allow_zero=True),
        _positive("optimize.histogram_bins", r.get("optimize", "histogram_bins", int, 20)),
    )

    free = tuple(r.get("zero_order", "free_offdiag", lambda s: _split_list(s, ";"), []))
    zero_pairs = set(zero_order_offdiag_pairs(n))
    for f in free:
        try:
            pair = tuple(sorted(parse_pair(f, n)))
        except ValueError as exc:
            raise ConfigError("zero_order.free_offdiag", str(exc)) from None
        if pair not in zero_pairs:
            raise ConfigError("zero_order.free_offdiag", f"{f} is not an off-diagonal 0-order entry")
    rho00 = r.get("zero_order", "rho00", float, 0.0)
    if not 0 <= rho00 <= 1:
        raise ConfigError("zero_order.rho00", f"must lie in [0, 1], got {rho00}")
    zero = ZeroOrderConfig(
        r.get("zero_order", "mode", ZeroOrderMode, ZeroOrderMode.ALMOST_PERFECT),
        rho00,
        r.boolean("zero_order", "restore_offdiag", False),
        free,
        r.get("zero_order", "solution", path_or_none, None),
    )
    simulate = SimulateConfig(
        r.get("simulate", "solution", path_or_none, None),
        _positive("simulate.trials", r.get("simulate", "trials", int, 10)),
        _positive("simulate.higher_scale", r.get("simulate", "higher_scale", float, 0.05), allow_zero=True),
    )
    spins = tuple(r.get("verify", "n_spins", lambda s: [int(x) for x in _split_list(s)], [4, 5, 6]))
    for s in spins:
        if s < 2 * n:
            raise ConfigError("verify.n_spins", f"{s} spins cannot hold a {n}-qubit sender and receiver")
    verify = VerifyConfig(
        spins,
        _positive("verify.trials", r.get("verify", "trials", int, 20)),
        _positive("verify.restarts", r.get("verify", "restarts", int, 5)),
    )
    return RunConfig(chain, partition, time, optimize, zero, simulate, verify)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), str(exc)) from None
    return parse_config(text, base_dir=path.parent)
