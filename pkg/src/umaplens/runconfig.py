"""Run configuration: dataclass specs with TOML round-tripping.

Every experiment writes the fully resolved config back into its output
directory so reruns are reproducible from the artifact alone.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .datagen import Dataset, gen_ring, gen_uniform_square, load_csv
from .kernel import Kernel
from .optimizer import OptimizerConfig
from .simgraph import SimilarityGraph, build_knn_graph, dense_similarities, perturb


@dataclass
class DatasetSpec:
    kind: str = "ring"  # ring | square | csv
    n: int = 1000
    radius: float = 20.0
    half_width: float = 4.0
    seed: int = 3
    path: str = ""

    def build(self) -> Dataset:
        if self.kind == "ring":
            return gen_ring(self.n, self.radius, self.half_width, self.seed)
        if self.kind == "square":
            return gen_uniform_square(self.n, self.seed)
        if self.kind == "csv":
            if not self.path:
                raise ValueError("dataset.kind='csv' needs dataset.path")
            return load_csv(self.path)
        raise ValueError(f"unknown dataset kind {self.kind!r}")


@dataclass
class GraphSpec:
    k: int = 15
    metric: str = "euclidean"
    dense: bool = False
    perturb: str = "none"
    perturb_seed: int = 0
    filter_epochs: int = 200

    def build(self, dataset: Dataset, kernel: Kernel) -> SimilarityGraph:
        if self.dense:
            graph = dense_similarities(dataset, kernel)
        else:
            if not self.k < dataset.n:
                raise ValueError("graph.k must be smaller than the dataset size")
            graph = build_knn_graph(dataset, self.k, self.metric)
        if self.perturb != "none":
            graph = perturb(
                graph, self.perturb, seed=self.perturb_seed, n_epochs=self.filter_epochs
            )
        return graph


@dataclass
class KernelSpec:
    min_dist: float = 0.1
    spread: float = 1.0
    a: float = 0.0  # a, b > 0 bypass the min_dist/spread fit
    b: float = 0.0
    eps_rep: float = 1e-3
    grad_clip: float = 4.0

    def build(self) -> Kernel:
        if self.a > 0 and self.b > 0:
            return Kernel(self.a, self.b, self.eps_rep, self.grad_clip)
        return Kernel.from_min_dist(
            self.min_dist, self.spread, eps_rep=self.eps_rep, grad_clip=self.grad_clip
        )


@dataclass
class OptimizerSpec:
    m: int = 5
    n_epochs: int = 500
    alpha0: float = 0.1
    lr_decay: bool = True
    push_tail: bool = False
    seed: int = 0
    init: str = "data"
    edge_order: str = "fixed"
    loss_every: int = 1
    snapshot_every: int = 0

    def build(self) -> OptimizerConfig:
        return OptimizerConfig(
            m=self.m,
            n_epochs=self.n_epochs,
            alpha0=self.alpha0,
            lr_decay=self.lr_decay,
            push_tail=self.push_tail,
            seed=self.seed,
            init=self.init,
            edge_order=self.edge_order,
            loss_every=self.loss_every,
        )


@dataclass
class RunConfig:
    name: str = "run"
    outdir: str = "runs/run"
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    graph: GraphSpec = field(default_factory=GraphSpec)
    kernel: KernelSpec = field(default_factory=KernelSpec)
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)

    @classmethod
    def from_toml(cls, path: str | Path) -> "RunConfig":
        with Path(path).open("rb") as fh:
            raw = tomllib.load(fh)
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        def section(spec_cls, key):
            data = raw.get(key, {})
            allowed = {f.name for f in fields(spec_cls)}
            unknown = set(data) - allowed
            if unknown:
                raise ValueError(f"unknown keys in [{key}]: {sorted(unknown)}")
            return spec_cls(**data)

        return cls(
            name=raw.get("name", "run"),
            outdir=raw.get("outdir", "runs/run"),
            dataset=section(DatasetSpec, "dataset"),
            graph=section(GraphSpec, "graph"),
            kernel=section(KernelSpec, "kernel"),
            optimizer=section(OptimizerSpec, "optimizer"),
        )

    def to_toml(self) -> str:
        lines = [_toml_kv("name", self.name), _toml_kv("outdir", self.outdir), ""]
        for key in ("dataset", "graph", "kernel", "optimizer"):
            lines.append(f"[{key}]")
            for k, v in asdict(getattr(self, key)).items():
                lines.append(_toml_kv(k, v))
            lines.append("")
        return "\n".join(lines)

    def write_toml(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_toml())


def _toml_kv(key: str, value) -> str:
    if isinstance(value, bool):
        return f"{key} = {'true' if value else 'false'}"
    if isinstance(value, (int, float)):
        return f"{key} = {value!r}"
    return f'{key} = "{value}"'
