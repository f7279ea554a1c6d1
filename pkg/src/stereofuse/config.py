"""Pipeline configuration: a flat sectioned key-value format (INI) dumped
alongside every run for provenance; every field is validated against the
owning stage's preconditions at load time."""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, fields

from .errors import ParameterError

THREADS_ENV_VAR = "STEREOFUSE_THREADS"

_SECTIONS = {
    "matching": ("d_max", "census_window", "pyramid_levels", "radius", "temperature"),
    "ordering": ("windows", "use_sigmoid", "pre_scale"),
    "local_fusion": ("iterations", "amplitude", "kappa", "sample_mode", "ilf"),
    "global_fusion": (
        "gf", "registration", "irls_iters", "min_inliers", "tile", "lambda_reg",
        "w_cost", "w_agree", "w_res", "tau_res",
    ),
    "loss": ("gamma", "loss_exponent"),
    "run": ("seed", "threads"),
}

# Table-style window ablation presets; a bare {1} kernel carries no neighbor
# comparisons, so it runs with guidance disabled.
WINDOW_PRESETS = ((1,), (3,), (5, 3), (9, 7, 5, 3), (13, 11, 9, 7, 5, 3))

# Confidence ablation variants: "cost" scores from the sampled cost curve
# alone; "hybrid" adds ordering agreement and the mono/stereo residual.
CONFIDENCE_PRESETS = {
    "cost": (1.0, 0.0, 0.0),
    "hybrid": (0.4, 0.3, 0.3),
}

# Rejected fusion designs kept out of the pipeline on purpose: per-iteration
# direct concatenation of the mono depth (noise-sensitive) and registration-
# free post-fusion of the final disparity (scale-ambiguous).  Use ilf=off /
# gf=off / registration=off to reproduce their configuration shapes.


@dataclass
class PipelineConfig:
    # matching
    d_max: int = 64
    census_window: int = 7
    pyramid_levels: int = 2
    radius: int = 4
    temperature: float = 0.01
    # ordering
    windows: tuple = (5, 3)
    use_sigmoid: bool = True
    pre_scale: float = 1.0
    # local fusion
    iterations: int = 8
    amplitude: float = 1.0
    kappa: float = 4.0
    sample_mode: bool = False
    ilf: bool = True
    # global fusion
    gf: bool = True
    registration: str = "global"   # global | local | off
    irls_iters: int = 20
    min_inliers: int = 100
    tile: int = 32
    lambda_reg: float = 0.1
    w_cost: float = 0.4
    w_agree: float = 0.3
    w_res: float = 0.3
    tau_res: float = 1.0
    # loss
    gamma: float = 0.9
    loss_exponent: str = "paper"   # paper | raft
    # run
    seed: int = 0
    threads: int = 0               # 0: take STEREOFUSE_THREADS or 1

    def validate(self):
        if self.d_max < 3:
            raise ParameterError(f"d_max must be >= 3, got {self.d_max}")
        if self.census_window % 2 == 0 or not 3 <= self.census_window <= 7:
            raise ParameterError(
                f"census_window must be odd in [3, 7], got {self.census_window}"
            )
        if self.pyramid_levels < 1:
            raise ParameterError(f"pyramid_levels must be >= 1, got {self.pyramid_levels}")
        if self.radius < 0:
            raise ParameterError(f"radius must be >= 0, got {self.radius}")
        if self.temperature <= 0:
            raise ParameterError(f"temperature must be positive, got {self.temperature}")
        self.windows = tuple(int(k) for k in self.windows)
        guided = self.windows != (1,)
        if guided:
            for k in self.windows:
                if k % 2 == 0 or k < 3:
                    raise ParameterError(f"ordering window {k} must be odd and >= 3")
        if self.pre_scale <= 0:
            raise ParameterError(f"pre_scale must be positive, got {self.pre_scale}")
        if self.iterations < 1:
            raise ParameterError(f"iterations must be >= 1, got {self.iterations}")
        if self.amplitude < 0:
            raise ParameterError(f"amplitude must be >= 0, got {self.amplitude}")
        if self.kappa <= 0:
            raise ParameterError(f"kappa must be positive, got {self.kappa}")
        if self.registration not in ("global", "local", "off"):
            raise ParameterError(f"registration '{self.registration}' unknown")
        if self.irls_iters < 1:
            raise ParameterError(f"irls_iters must be >= 1, got {self.irls_iters}")
        if self.min_inliers < 2:
            raise ParameterError(f"min_inliers must be >= 2, got {self.min_inliers}")
        if self.tile < 16:
            raise ParameterError(f"tile must be >= 16, got {self.tile}")
        if self.lambda_reg < 0:
            raise ParameterError(f"lambda_reg must be >= 0, got {self.lambda_reg}")
        weights = (self.w_cost, self.w_agree, self.w_res)
        if min(weights) < 0 or abs(sum(weights) - 1.0) > 1e-6:
            raise ParameterError(
                f"confidence weights {weights} must be >= 0 and sum to 1"
            )
        if self.tau_res <= 0:
            raise ParameterError(f"tau_res must be positive, got {self.tau_res}")
        if not 0.0 < self.gamma <= 1.0:
            raise ParameterError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.loss_exponent not in ("paper", "raft"):
            raise ParameterError(f"loss_exponent '{self.loss_exponent}' unknown")
        if self.threads < 0:
            raise ParameterError(f"threads must be >= 0, got {self.threads}")
        return self

    @property
    def guidance_enabled(self):
        return self.ilf and self.windows != (1,)

    def effective_threads(self):
        if self.threads > 0:
            return self.threads
        env = os.environ.get(THREADS_ENV_VAR, "")
        try:
            return max(1, int(env)) if env else 1
        except ValueError:
            return 1

    def dump(self) -> str:
        parser = configparser.ConfigParser()
        for section, keys in _SECTIONS.items():
            parser[section] = {}
            for key in keys:
                value = getattr(self, key)
                if isinstance(value, tuple):
                    text = ",".join(str(v) for v in value)
                elif isinstance(value, bool):
                    text = "true" if value else "false"
                elif isinstance(value, float):
                    text = repr(value)
                else:
                    text = str(value)
                parser[section][key] = text
        out = io.StringIO()
        parser.write(out)
        return out.getvalue()

    @classmethod
    def load(cls, text: str) -> "PipelineConfig":
        parser = configparser.ConfigParser()
        parser.read_string(text)
        types = {f.name: f.type for f in fields(cls)}
        defaults = cls()
        kwargs = {}
        for section in parser.sections():
            if section not in _SECTIONS:
                raise ParameterError(f"unknown config section [{section}]")
            for key, raw in parser[section].items():
                if key not in _SECTIONS[section]:
                    raise ParameterError(f"unknown config key {section}.{key}")
                kwargs[key] = _parse_value(key, raw, getattr(defaults, key))
        return cls(**kwargs).validate()

    def apply_overrides(self, pairs) -> "PipelineConfig":
        """key=value overrides (the --ablate surface); returns a validated copy."""
        defaults = PipelineConfig()
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        for pair in pairs:
            if "=" not in pair:
                raise ParameterError(f"override '{pair}' is not key=value")
            key, _, raw = pair.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key == "confidence":
                if raw not in CONFIDENCE_PRESETS:
                    raise ParameterError(
                        f"confidence variant '{raw}' unknown "
                        f"(choose from {sorted(CONFIDENCE_PRESETS)})"
                    )
                values["w_cost"], values["w_agree"], values["w_res"] = CONFIDENCE_PRESETS[raw]
                continue
            if key not in values:
                raise ParameterError(f"unknown config key '{key}'")
            values[key] = _parse_value(key, raw, getattr(defaults, key))
        return PipelineConfig(**values).validate()


def _parse_value(key, raw, default):
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "on", "1", "yes"):
            return True
        if low in ("false", "off", "0", "no"):
            return False
        raise ParameterError(f"boolean value expected for '{key}', got '{raw}'")
    if isinstance(default, tuple):
        parts = [p for p in raw.replace(" ", "").split(",") if p]
        if not parts:
            raise ParameterError(f"empty list for '{key}'")
        return tuple(int(p) for p in parts)
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ParameterError(f"integer expected for '{key}', got '{raw}'") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ParameterError(f"number expected for '{key}', got '{raw}'") from None
    return raw
