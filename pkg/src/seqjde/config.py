"""Experiment configuration in INI form.

Lists are comma separated; a grid is one ``lower, upper, count`` triple per
axis, axes separated by ``;``.  Floats are written with ``repr`` so a config
survives a write/read cycle unchanged.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .bellman import CostCoefficients
from .design import ConstraintSpec, PgaConfig
from .grid import Axis, GridSpec
from .models import AskModel, AskSpec, BinaryToyModel, ShiftInMeanModel, ShiftInMeanSpec, ToySpec
from .models.base import SequentialModel
from .models.shift_in_mean import build_default_spec, build_symmetric_spec
from .msprt import THRESHOLD_RULES

MODELS = ("shift-in-mean", "ask", "toy")
METHODS = ("lp", "pga", "lp-then-pga")


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(" ", "").split(",") if v)


def _fmt(values) -> str:
    return ", ".join(repr(float(v)) for v in values)


def _parse_grid(text: str) -> GridSpec:
    axes = []
    for part in text.split(";"):
        lo, hi, k = (v.strip() for v in part.split(","))
        axes.append(Axis(float(lo), float(hi), int(k)))
    return GridSpec(tuple(axes))


def _fmt_grid(grid: GridSpec) -> str:
    return "; ".join(f"{a.lower!r}, {a.upper!r}, {a.count}" for a in grid.axes)


@dataclass(frozen=True)
class ModelConfig:
    name: str
    horizon: int
    hyp_prior: Optional[tuple[float, ...]] = None
    # shift-in-mean
    sigma2: float = 4.0
    mean_prior: str = "default"
    mu_grid: Optional[Axis] = None
    # shift-in-mean and ask
    x_grid: Optional[Axis] = None
    # ask
    symbols: tuple[float, ...] = (-2.0, -1.0, 1.0, 2.0)
    a: float = 2.1
    b: float = 0.9

    def __post_init__(self):
        if self.name not in MODELS:
            raise ConfigError(f"unknown model {self.name!r}; choose from {MODELS}")
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        if self.mean_prior not in ("default", "symmetric"):
            raise ConfigError("mean_prior must be 'default' or 'symmetric'")

    def build(self) -> SequentialModel:
        if self.name == "shift-in-mean":
            base = build_symmetric_spec() if self.mean_prior == "symmetric" else build_default_spec()
            spec = replace(base, sigma2=self.sigma2, hyp_prior=self.hyp_prior, horizon=self.horizon,
                           mu_grid=self.mu_grid or base.mu_grid, x_grid=self.x_grid or base.x_grid)
            return ShiftInMeanModel(spec)
        if self.name == "ask":
            kw = {} if self.x_grid is None else {"x_grid": self.x_grid}
            return AskModel(AskSpec(symbols=self.symbols, a=self.a, b=self.b, hyp_prior=self.hyp_prior,
                                    horizon=self.horizon, **kw))
        kw = {} if self.hyp_prior is None else {"hyp_prior": self.hyp_prior}
        return BinaryToyModel(replace(ToySpec(**kw), horizon=self.horizon))


@dataclass(frozen=True)
class DesignConfig:
    method: str = "pga"
    min_samples: int = 1
    init: Optional[CostCoefficients] = None
    lp_eps: float = 1e-8
    fold: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown design method {self.method!r}; choose from {METHODS}")

    def __eq__(self, other):
        if not isinstance(other, DesignConfig):
            return NotImplemented
        same_init = (self.init is None and other.init is None) or (
            self.init is not None and other.init is not None
            and tuple(self.init.vector) == tuple(other.init.vector))
        return same_init and (self.method, self.min_samples, self.lp_eps, self.fold) == (
            other.method, other.min_samples, other.lp_eps, other.fold)


@dataclass(frozen=True)
class SimulationConfig:
    runs: int = 100_000
    seed: int = 1
    mode: str = "prior"
    threads: int = 1
    threshold_rule: str = "m-over-alpha"

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError("runs must be at least 1")
        if self.mode not in ("prior", "conditional"):
            raise ConfigError("mode must be 'prior' or 'conditional'")
        if self.threshold_rule not in THRESHOLD_RULES:
            raise ConfigError(f"threshold_rule must be one of {THRESHOLD_RULES}")


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig
    fine_grid: GridSpec
    constraints: ConstraintSpec
    coarse_grid: Optional[GridSpec] = None
    design: DesignConfig = field(default_factory=DesignConfig)
    pga: PgaConfig = field(default_factory=PgaConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    output: str = "results"

    def __post_init__(self):
        dim = {"shift-in-mean": 1, "ask": 2, "toy": 1}[self.model.name]
        for g in (self.fine_grid, self.coarse_grid):
            if g is not None and g.ndim != dim:
                raise ConfigError(f"model {self.model.name} needs {dim}-dimensional grids")
        if self.design.method == "lp-then-pga" and self.coarse_grid is None:
            raise ConfigError("lp-then-pga needs a coarse grid")

    # serialization

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        m = self.model
        cp["model"] = {"name": m.name, "horizon": str(m.horizon)}
        if m.hyp_prior is not None:
            cp["model"]["hyp_prior"] = _fmt(m.hyp_prior)
        if m.name == "shift-in-mean":
            cp["model"]["sigma2"] = repr(m.sigma2)
            cp["model"]["mean_prior"] = m.mean_prior
            if m.mu_grid is not None:
                cp["model"]["mu_grid"] = _fmt_grid(GridSpec((m.mu_grid,)))
        if m.name == "ask":
            cp["model"]["symbols"] = _fmt(m.symbols)
            cp["model"]["a"] = repr(m.a)
            cp["model"]["b"] = repr(m.b)
        if m.x_grid is not None:
            cp["model"]["x_grid"] = _fmt_grid(GridSpec((m.x_grid,)))
        cp["grid"] = {"fine": _fmt_grid(self.fine_grid)}
        if self.coarse_grid is not None:
            cp["grid"]["coarse"] = _fmt_grid(self.coarse_grid)
        cp["constraints"] = {"alpha": _fmt(self.constraints.alpha_bar), "beta": _fmt(self.constraints.beta_bar)}
        d = self.design
        cp["design"] = {"method": d.method, "min_samples": str(d.min_samples), "lp_eps": repr(d.lp_eps),
                        "fold": str(d.fold).lower()}
        if d.init is not None:
            cp["design"]["init_lam"] = _fmt(d.init.lam)
            cp["design"]["init_mu"] = _fmt(d.init.mu)
        p = self.pga
        cp["pga"] = {"gamma": repr(p.gamma), "tol_alpha": repr(p.tol_alpha), "tol_beta": repr(p.tol_beta),
                     "max_iter": str(p.max_iter), "gradient_mode": p.gradient_mode, "mc_runs": str(p.mc_runs),
                     "mc_seed": str(p.mc_seed), "diagonal_scaling": str(p.diagonal_scaling).lower()}
        s = self.simulation
        cp["simulation"] = {"runs": str(s.runs), "seed": str(s.seed), "mode": s.mode, "threads": str(s.threads),
                            "threshold_rule": s.threshold_rule}
        cp["output"] = {"directory": self.output}
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines += [f"{k} = {v}" for k, v in cp[sec].items()]
            lines.append("")
        return "\n".join(lines)

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
        cp.read_string(text)
        try:
            return cls._from_parser(cp)
        except (KeyError, configparser.Error) as exc:
            raise ConfigError(f"incomplete config: {exc}") from exc

    @classmethod
    def _from_parser(cls, cp) -> "ExperimentConfig":
        sm = cp["model"]
        one_axis = lambda key: _parse_grid(sm[key]).axes[0] if key in sm else None  # noqa: E731
        model = ModelConfig(
            name=sm["name"],
            horizon=sm.getint("horizon"),
            hyp_prior=_floats(sm["hyp_prior"]) if "hyp_prior" in sm else None,
            sigma2=sm.getfloat("sigma2", 4.0),
            mean_prior=sm.get("mean_prior", "default"),
            mu_grid=one_axis("mu_grid"),
            x_grid=one_axis("x_grid"),
            symbols=_floats(sm["symbols"]) if "symbols" in sm else (-2.0, -1.0, 1.0, 2.0),
            a=sm.getfloat("a", 2.1),
            b=sm.getfloat("b", 0.9),
        )
        g = cp["grid"]
        c = cp["constraints"]
        constraints = ConstraintSpec(_floats(c["alpha"]), _floats(c["beta"]))
        design = DesignConfig()
        if cp.has_section("design"):
            sd = cp["design"]
            init = None
            if "init_lam" in sd:
                init = CostCoefficients(_floats(sd["init_lam"]), _floats(sd["init_mu"]))
            design = DesignConfig(sd.get("method", "pga"), sd.getint("min_samples", 1), init,
                                  sd.getfloat("lp_eps", 1e-8), sd.getboolean("fold", False))
        pga = PgaConfig()
        if cp.has_section("pga"):
            sp = cp["pga"]
            pga = PgaConfig(sp.getfloat("gamma", 1000.0), sp.getfloat("tol_alpha", 1e-3),
                            sp.getfloat("tol_beta", 5e-3), sp.getint("max_iter", 500),
                            sp.get("gradient_mode", "grid"), sp.getint("mc_runs", 100_000),
                            sp.getint("mc_seed", 0), sp.getboolean("diagonal_scaling", False))
        sim = SimulationConfig()
        if cp.has_section("simulation"):
            ss = cp["simulation"]
            sim = SimulationConfig(ss.getint("runs", 100_000), ss.getint("seed", 1), ss.get("mode", "prior"),
                                   ss.getint("threads", 1), ss.get("threshold_rule", "m-over-alpha"))
        out = cp["output"].get("directory", "results") if cp.has_section("output") else "results"
        return cls(model, _parse_grid(g["fine"]), constraints,
                   _parse_grid(g["coarse"]) if "coarse" in g else None, design, pga, sim, out)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_ini(Path(path).read_text())

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_ini())
        return path

    def with_overrides(self, **sim) -> "ExperimentConfig":
        """Copy with simulation fields (runs, seed, threads, ...) replaced where not None."""
        changes = {k: v for k, v in sim.items() if v is not None}
        return replace(self, simulation=replace(self.simulation, **changes)) if changes else self


def shipped_config(name: str) -> Path:
    """Path of a config file bundled with the package (``shift_in_mean``, ``ask4``, ``toy``)."""
    path = Path(__file__).parent / "configs" / f"{name}.cfg"
    if not path.exists():
        raise FileNotFoundError(path)
    return path


__all__ = ["ConfigError", "DesignConfig", "ExperimentConfig", "ModelConfig", "SimulationConfig", "shipped_config"]
