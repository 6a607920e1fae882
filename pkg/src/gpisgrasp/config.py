"""Run configuration: JSON documents validated against ``schema/run_config.schema.json``."""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import ConfigError
from .geometry import TriMesh, box, cylinder, icosphere, load_mesh
from .gpis import GpisModel
from .hand import HandModel
from .planner import AdmmParams, PlannerParams, QualityParams, SaParams, Scene, build_scene

ENV_OUTPUT_DIR = "GPISGRASP_OUTPUT_DIR"
ENV_LOG_LEVEL = "GPISGRASP_LOG_LEVEL"

DEFAULTS = {
    "name": "run",
    "hand_file": None,
    "hand": {},
    "gpis": {"n_samples": 2000, "sample_seed": 0, "max_points": 400, "model_file": None},
    "domain": {"outer_scale": 2.5},
    "quality": {},
    "search": {},
    "admm": {},
    "sa": {},
    "planner": "hpp",
    "seeds": [0],
    "budget": {"n_init": 20, "n_iter": 40, "max_evals": None, "evals": 60, "time_budget": None},
    "output_dir": "results",
}


def load_schema() -> dict:
    return json.loads(resources.files("gpisgrasp").joinpath("schema/run_config.schema.json").read_text())


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class RunConfig:
    data: dict  # validated, defaults filled in

    @classmethod
    def from_dict(cls, d, base_dir=None) -> "RunConfig":
        try:
            jsonschema.validate(d, load_schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"invalid config at {where}: {exc.message}") from None
        data = _merge(DEFAULTS, d)
        if "output_dir" not in d and os.environ.get(ENV_OUTPUT_DIR):
            data["output_dir"] = os.environ[ENV_OUTPUT_DIR]
        if base_dir is not None:
            # relative file references resolve against the config file location
            for holder, key in ((data["mesh"], "path"), (data, "hand_file"), (data["gpis"], "model_file")):
                p = holder.get(key)
                if p and not Path(p).is_absolute():
                    holder[key] = str(Path(base_dir) / p)
        return cls(data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        return cls.from_dict(d, base_dir=path.parent)

    def with_overrides(self, over: dict) -> "RunConfig":
        merged = _merge({k: v for k, v in self.data.items()}, over)
        return RunConfig.from_dict(merged)

    def snapshot(self) -> dict:
        return copy.deepcopy(self.data)

    # builders ----------------------------------------------------------
    def mesh(self) -> TriMesh:
        return build_mesh(self.data["mesh"])

    def hand(self) -> HandModel:
        base = {}
        if self.data["hand_file"]:
            p = Path(self.data["hand_file"])
            if not p.exists():
                raise ConfigError(f"hand file not found: {p}")
            base = json.loads(p.read_text())
        try:
            return HandModel.from_dict({**base, **self.data["hand"]})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid hand description: {exc}") from None

    def quality(self) -> QualityParams:
        return QualityParams(**self.data["quality"])

    def planner_params(self) -> PlannerParams:
        b = self.data["budget"]
        return PlannerParams(
            n_init=b["n_init"],
            n_iter=b["n_iter"],
            # the shared evaluation budget caps the BO planners too
            max_evals=b["max_evals"] if b["max_evals"] is not None else b["evals"],
            time_budget=b["time_budget"],
            admm=AdmmParams(**self.data["admm"]),
            **self.data["search"],
        )

    def sa_params(self) -> SaParams:
        return SaParams(**self.data["sa"])

    def scene(self) -> Scene:
        g = self.data["gpis"]
        gpis = None
        if g.get("model_file"):
            p = Path(g["model_file"])
            if not p.exists():
                raise ConfigError(f"GPIS model file not found: {p}")
            gpis = GpisModel.loads(p.read_text())
        kw = {k: g[k] for k in ("offset", "length_scale", "sigma", "jitter", "max_points") if g.get(k) is not None}
        return build_scene(
            self.mesh(),
            self.hand(),
            n_samples=g["n_samples"],
            sample_seed=g["sample_seed"],
            outer_scale=self.data["domain"]["outer_scale"],
            quality=self.quality(),
            gpis=gpis,
            gpis_kwargs=kw,
        )


def build_mesh(mesh_cfg: dict) -> TriMesh:
    if "path" in mesh_cfg:
        p = Path(mesh_cfg["path"])
        if not p.exists():
            raise ConfigError(f"mesh file not found: {p}")
        return load_mesh(p, mesh_cfg.get("format"), mesh_cfg.get("scale", 1.0), mesh_cfg.get("drop_degenerate", False))
    kind = mesh_cfg["primitive"]
    center = mesh_cfg.get("center", (0.0, 0.0, 0.0))
    if kind == "sphere":
        return icosphere(mesh_cfg.get("radius", 0.05), mesh_cfg.get("subdivisions", 3), center)
    if kind == "box":
        return box(mesh_cfg.get("extents", (0.06, 0.06, 0.12)), center)
    return cylinder(mesh_cfg.get("radius", 0.04), mesh_cfg.get("height", 0.12), mesh_cfg.get("segments", 48), center)


def object_key(mesh_cfg: dict) -> str:
    """Stable identifier of the object a config refers to."""
    return json.dumps(mesh_cfg, sort_keys=True)


def dataclass_keys(cls) -> set:
    return {f.name for f in fields(cls)}
