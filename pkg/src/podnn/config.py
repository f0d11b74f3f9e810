"""INI-style run configuration: ``key = value`` lines under ``[section]`` headers."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from fractions import Fraction

from .analysis import APRIORI, TOLERANCE, StudyConfig
from .nn import TrainConfig
from .problem import (
    COMPLEX_REACTION,
    KINDS,
    ExpansionField,
    FemSpace,
    HolomorphyProfile,
    ModelProblemConfig,
)
from .qmc import QmcConfig, RateConfig

AUTO = "auto"


class ConfigError(ValueError):
    pass


def _float(text: str) -> float:
    # accepts fractions such as 4/9
    return float(Fraction(text)) if "/" in text else float(text)


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _auto(parse):
    def inner(text):
        return None if text.lower() == AUTO else parse(text)

    return inner


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


def _choice(*options):
    def inner(text):
        if text not in options:
            raise ValueError(f"expected one of {options}, got {text!r}")
        return text

    return inner


# section -> key -> (parser, default); a default of None means "auto"
SCHEMA = {
    "problem": {
        "kind": (_choice(*KINDS), "real_diffusion"),
        "n_dof": (int, 128),
        "theta": (_float, 9 / 4),
        "amplitude": (_auto(_float), None),
        "n_modes": (int, 128),
        "p": (_float, 4 / 9),
        "absorption": (_float, 1.0),
        "reaction": (_float, 1.0),
    },
    "qmc": {
        "s": (int, 16),
        "n_points": (int, 256),
        "start_index": (int, 1),
        "sequence": (_choice("halton"), "halton"),
        "alpha": (_float, 1.0),
    },
    "pod": {
        "rank_mode": (_choice(TOLERANCE, APRIORI), TOLERANCE),
        "tolerance": (_auto(_float), None),
    },
    "nn": {
        "max_epochs": (int, 50_000),
        "batch_size": (int, 0),
        "lr": (_float, 1e-3),
        "beta1": (_float, 0.9),
        "beta2": (_float, 0.999),
        "eps": (_float, 1e-12),
        "weight_decay": (_float, 1.0),
        "plateau_patience": (int, 500),
        "plateau_factor": (_float, 0.1),
        "plateau_threshold": (_float, 1e-4),
        "plateau_eps": (_float, 1e-20),
        "stop_threshold": (_auto(_float), None),
        "seed": (int, 0),
    },
    "study": {
        "n_grid": (_int_list, (64, 128, 256)),
        "test_size": (int, 512),
        "test_start": (_auto(int), None),
        "train_nn": (_bool, True),
    },
}


@dataclass(frozen=True)
class RunConfig:
    values: dict  # section -> key -> parsed value, defaults filled in

    def __getitem__(self, section):
        return self.values[section]

    @property
    def problem(self) -> ModelProblemConfig:
        p = self["problem"]
        amp = p["amplitude"]
        if amp is None:
            amp = 0.3 if p["kind"] == COMPLEX_REACTION else 0.4
        return ModelProblemConfig(
            kind=p["kind"],
            fem=FemSpace(p["n_dof"]),
            field=ExpansionField(p["theta"], amp, p["n_modes"]),
            profile=HolomorphyProfile(p["p"]),
            absorption=p["absorption"],
            reaction=p["reaction"],
        )

    @property
    def qmc(self) -> QmcConfig:
        q = self["qmc"]
        return QmcConfig(q["s"], q["n_points"], q["start_index"], q["sequence"])

    @property
    def rates(self) -> RateConfig:
        return RateConfig(self["qmc"]["alpha"], self["problem"]["p"])

    @property
    def train(self) -> TrainConfig:
        n = self["nn"]
        return TrainConfig(
            max_epochs=n["max_epochs"],
            batch_size=n["batch_size"],
            lr_initial=n["lr"],
            adam_beta1=n["beta1"],
            adam_beta2=n["beta2"],
            adam_eps=n["eps"],
            weight_decay=n["weight_decay"],
            plateau_patience=n["plateau_patience"],
            plateau_factor=n["plateau_factor"],
            plateau_threshold=n["plateau_threshold"],
            plateau_eps=n["plateau_eps"],
            stop_threshold=n["stop_threshold"],
            seed=n["seed"],
        )

    def stop_threshold(self, n_samples: int) -> float:
        t = self["nn"]["stop_threshold"]
        return n_samples ** (-self.rates.alpha) if t is None else t

    def tolerance(self, n_samples: int) -> float:
        t = self["pod"]["tolerance"]
        return 1.0 / (100.0 * math.sqrt(n_samples)) if t is None else t

    @property
    def test_start(self) -> int:
        t = self["study"]["test_start"]
        q = self["qmc"]
        return q["start_index"] + q["n_points"] if t is None else t

    def study(self, threads=None) -> StudyConfig:
        st = self["study"]
        return StudyConfig(
            problem=self.problem,
            s=self["qmc"]["s"],
            n_grid=st["n_grid"],
            rates=self.rates,
            rank_mode=self["pod"]["rank_mode"],
            tolerance=self["pod"]["tolerance"],
            test_size=st["test_size"],
            test_start=st["test_start"],
            start_index=self["qmc"]["start_index"],
            train=self.train,
            train_nn=st["train_nn"],
            threads=threads,
        )

    def validate(self) -> "RunConfig":
        """Build every derived object once so invalid settings fail before any compute."""
        try:
            self.problem, self.qmc, self.rates, self.train
            self.study()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self["qmc"]["s"] > self["problem"]["n_modes"]:
            raise ConfigError("qmc.s exceeds problem.n_modes")
        return self

    def to_dict(self) -> dict:
        return {sec: dict(keys) for sec, keys in self.values.items()}


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(
        comment_prefixes=("#",), inline_comment_prefixes=("#",), interpolation=None
    )
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    values = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key, raw in parser.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {sec}.{key}")
            conv = SCHEMA[sec][key][0]
            try:
                values[sec][key] = conv(raw.strip())
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigError(f"{sec}.{key}: {exc}") from exc
    return RunConfig(values).validate()


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig({s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}).validate()
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def problem_to_dict(cfg: ModelProblemConfig) -> dict:
    return {
        "kind": cfg.kind,
        "n_dof": cfg.fem.n_dof,
        "theta": cfg.field.theta,
        "amplitude": cfg.field.amplitude,
        "n_modes": cfg.field.n_modes,
        "p": cfg.profile.p,
        "absorption": cfg.absorption,
        "reaction": cfg.reaction,
    }


def problem_from_dict(d: dict) -> ModelProblemConfig:
    return ModelProblemConfig(
        kind=d["kind"],
        fem=FemSpace(int(d["n_dof"])),
        field=ExpansionField(float(d["theta"]), float(d["amplitude"]), int(d["n_modes"])),
        profile=HolomorphyProfile(float(d["p"])),
        absorption=float(d["absorption"]),
        reaction=float(d["reaction"]),
    )
