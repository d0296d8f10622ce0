"""Pipeline configuration: one TOML document with a section per stage."""
from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cluster import ClusterCfg
from .diffusion import DiffusionCfg
from .distill import DistillWeights
from .errors import ConfigError
from .superpoint import SegCfg
from .teacher import MaskMergeConfig

METHODS = ("pca", "gft", "diffusion")


@dataclass(frozen=True)
class BevCfg:
    resolution: float = 0.1


@dataclass(frozen=True)
class PipelineConfig:
    scene: Path
    out: Path
    seed: int = 0
    methods: tuple = ("diffusion",)
    workers: int = 1
    solver: str = "iterative"
    gft_keep_fraction: float = 0.25
    eta: float = 0.5
    mask: MaskMergeConfig = field(default_factory=MaskMergeConfig)
    distill: DistillWeights = field(default_factory=DistillWeights)
    superpoint: SegCfg = field(default_factory=SegCfg)
    diffusion: DiffusionCfg = field(default_factory=DiffusionCfg)
    cluster: ClusterCfg = field(default_factory=ClusterCfg)
    bev: BevCfg = field(default_factory=BevCfg)

    def __post_init__(self):
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"methods must be a non-empty subset of {METHODS}, got {list(self.methods)}")
        if self.solver not in ("iterative", "closed_form"):
            raise ConfigError("solver must be 'iterative' or 'closed_form'")
        if not 0 <= self.eta <= 1:
            raise ConfigError("eta must lie in [0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def cluster_cfg(self) -> ClusterCfg:
        return replace(self.cluster, seed=self.seed)


_SECTIONS = {
    "mask": MaskMergeConfig,
    "distill": DistillWeights,
    "superpoint": SegCfg,
    "diffusion": DiffusionCfg,
    "cluster": ClusterCfg,
    "bev": BevCfg,
}
_PIPELINE_KEYS = {"scene", "out", "seed", "methods", "workers", "solver", "gft_keep_fraction"}
_DIFFUSION_EXTRA = {"gft_keep_fraction", "solver"}


def _build(cls, table: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    try:
        return cls(**table)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def config_from_dict(doc: dict, base_dir: Path = Path(".")) -> PipelineConfig:
    doc = {k: dict(v) if isinstance(v, dict) else v for k, v in doc.items()}
    unknown = set(doc) - set(_SECTIONS) - {"pipeline", "vote"}
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    pipe = doc.get("pipeline", {})
    bad = set(pipe) - _PIPELINE_KEYS
    if bad:
        raise ConfigError(f"unknown keys in [pipeline]: {sorted(bad)}")
    if "scene" not in pipe:
        raise ConfigError("[pipeline] needs a 'scene' path")
    diff = doc.get("diffusion", {})
    extra = {k: diff.pop(k) for k in list(diff) if k in _DIFFUSION_EXTRA}
    vote = doc.get("vote", {})
    if set(vote) - {"eta"}:
        raise ConfigError(f"unknown keys in [vote]: {sorted(set(vote) - {'eta'})}")
    kwargs = {name: _build(cls, doc.get(name, {}), name) for name, cls in _SECTIONS.items()}
    try:
        return PipelineConfig(
            scene=(base_dir / pipe["scene"]).resolve(),
            out=(base_dir / pipe.get("out", "out")).resolve(),
            seed=int(pipe.get("seed", 0)),
            methods=tuple(pipe.get("methods", ["diffusion"])),
            workers=int(pipe.get("workers", 1)),
            solver=str(extra.get("solver", pipe.get("solver", "iterative"))),
            gft_keep_fraction=float(extra.get("gft_keep_fraction", pipe.get("gft_keep_fraction", 0.25))),
            eta=float(vote.get("eta", 0.5)),
            **kwargs,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(doc, path.parent)


def default_config_text(scene: str = ".", out: str = "run", k_primitive: int = 16,
                        methods=("diffusion",)) -> str:
    """Config document listing every tunable constant with its default."""
    m = ", ".join(f'"{x}"' for x in methods)
    return f"""\
[pipeline]
scene = "{scene}"
out = "{out}"
seed = 0
methods = [{m}]
workers = 1

[mask]
merge_iou = 0.5
min_mask_points = 10

[distill]
lambda_point = 1.0
lambda_proto = 1.0
lambda_nce = 0.3
tau = 0.07

[superpoint]
voxel_size = 0.5
growth_radius = 0.3

[diffusion]
alpha = 0.5
max_iters = 200
tol = 1e-10
solver = "iterative"
gft_keep_fraction = 0.25

[cluster]
energy_ratio = 0.9
k_coarse = 32
embed_dims = 16
k_primitive = {k_primitive}
kmeans_restarts = 5

[vote]
eta = 0.5

[bev]
resolution = 0.1
"""
