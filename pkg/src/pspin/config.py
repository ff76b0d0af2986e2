"""Run configuration: a flat INI document with fixed sections and keys.

Grammar (every key optional unless noted, unknown sections or keys are errors):

    [model]        beta, h, r, alpha, k, a          a = comma-separated a_1..a_m (required)
    [confinement]  type = hard | soft, L, k_exp
    [integrator]   dt, t_max, corrector_iters
    [mc]           N, dt_sde, t_max, n_disorder, n_noise, seed, record_times
    [fdt]          dt, tau_max, h_grid, tol, beta
    [series]       n_max, tau_max, t_wait
    [compare]      mode = mc | fdt, t_waits, tau_max
    [output]       directory, precision, stride

Lists are comma-separated.  Numbers accept Python float / int syntax.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .model import HardConstraint, MixtureSpec, ModelParams, SoftConstraint

SCHEMA: Dict[str, Dict[str, str]] = {
    "model": {"beta": "float", "h": "float", "r": "float", "alpha": "float", "k": "float",
              "a": "floats"},
    "confinement": {"type": "str", "L": "float", "k_exp": "int"},
    "integrator": {"dt": "float", "t_max": "float", "corrector_iters": "int"},
    "mc": {"N": "int", "dt_sde": "float", "t_max": "float", "n_disorder": "int",
           "n_noise": "int", "seed": "int", "record_times": "floats"},
    "fdt": {"dt": "float", "tau_max": "float", "h_grid": "floats", "tol": "float", "beta": "float"},
    "series": {"n_max": "int", "tau_max": "float", "t_wait": "float"},
    "compare": {"mode": "str", "t_waits": "floats", "tau_max": "float"},
    "output": {"directory": "str", "precision": "int", "stride": "int"},
}


class ConfigError(ValueError):
    pass


def _convert(kind: str, raw: str, where: str):
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw, 0)
        if kind == "floats":
            return tuple(float(v) for v in raw.split(",") if v.strip())
        return raw.strip()
    except ValueError:
        raise ConfigError("%s: cannot parse %r as %s" % (where, raw, kind)) from None


@dataclass
class RunConfig:
    values: Dict[str, Dict[str, object]] = field(default_factory=dict)

    def get(self, section: str, key: str, default=None):
        return self.values.get(section, {}).get(key, default)

    def has(self, section: str) -> bool:
        return section in self.values

    # -- builders (raise ConfigError on any precondition violation) --

    def model_params(self) -> ModelParams:
        a = self.get("model", "a")
        if a is None:
            raise ConfigError("[model] a is required")
        beta = self.get("model", "beta", 0.0)
        h = self.get("model", "h", 0.0)
        r = self.get("model", "r", 1.0)
        alpha = self.get("model", "alpha", 0.0)
        kind = self.get("confinement", "type", "hard")
        try:
            mixture = MixtureSpec(a)
            if kind == "hard":
                conf = HardConstraint(r=r, k=self.get("model", "k", 1.0))
            elif kind == "soft":
                L = self.get("confinement", "L")
                if L is None:
                    raise ConfigError("[confinement] L is required for type = soft")
                k_exp = self.get("confinement", "k_exp", 1)
                if not k_exp > mixture.m / 4:
                    raise ConfigError("k_exp must exceed m/4")
                conf = SoftConstraint(L=L, r=r, k_exp=k_exp, alpha=alpha, h=h)
            else:
                raise ConfigError("[confinement] type must be hard or soft")
            return ModelParams(beta=beta, h=h, mixture=mixture, confinement=conf, alpha=alpha)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def integrator_config(self):
        from .integrator import IntegratorConfig
        dt = self.get("integrator", "dt")
        t_max = self.get("integrator", "t_max")
        if dt is None or t_max is None:
            raise ConfigError("[integrator] dt and t_max are required")
        try:
            return IntegratorConfig(dt=dt, t_max=t_max,
                                    corrector_iters=self.get("integrator", "corrector_iters", 2))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def mc_config(self, seed_override: Optional[int] = None):
        from .langevin import McConfig
        req = ("N", "dt_sde", "t_max")
        if any(self.get("mc", k) is None for k in req):
            raise ConfigError("[mc] N, dt_sde and t_max are required")
        seed = self.get("mc", "seed", 0) if seed_override is None else seed_override
        times = self.get("mc", "record_times")
        if times is None:
            times = (0.0, self.get("mc", "t_max"))
        try:
            return McConfig(N=self.get("mc", "N"), dt_sde=self.get("mc", "dt_sde"),
                            t_max=self.get("mc", "t_max"),
                            n_disorder=self.get("mc", "n_disorder", 2),
                            n_noise=self.get("mc", "n_noise", 2),
                            record_times=tuple(sorted(times)), seed=seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def output(self) -> Tuple[Optional[str], int, int]:
        prec = self.get("output", "precision", 17)
        stride = self.get("output", "stride", 1)
        if not 1 <= prec <= 17:
            raise ConfigError("[output] precision must lie in [1, 17]")
        if stride < 1:
            raise ConfigError("[output] stride must be >= 1")
        return self.get("output", "directory"), prec, stride


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case-sensitive (L, N)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("malformed config: %s" % exc) from None
    values: Dict[str, Dict[str, object]] = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError("unknown section [%s]" % sec)
        values[sec] = {}
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError("unknown key %r in [%s]" % (key, sec))
            values[sec][key] = _convert(SCHEMA[sec][key], raw, "[%s] %s" % (sec, key))
    return RunConfig(values)


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError("cannot read config: %s" % exc) from None
