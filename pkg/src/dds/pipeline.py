"""Stage orchestration with file caches between stages.

Each stage reads its inputs from disk and writes its outputs to
``cfg.out``, so a resumed run sees exactly the bytes a cold run would.
``manifest.json`` records, per stage, a digest of the input files and the
parameters in effect plus a digest of every output; on ``resume`` a stage
is skipped when both still match.
"""
from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io
from .bev import export_bev
from .cluster import PrimitiveModel, fit_primitives
from .config import PipelineConfig
from .diffusion import build_graph, diffuse_closed_form, diffuse_iterative, gft_baseline, pca_baseline
from .distill import compute_prototypes, loss_nce, loss_point, loss_proto, loss_total
from .errors import ConfigError, EmptyPrototypeSet, NoConvergenceWarning, StageError
from .superpoint import SuperpointPartition, oversegment, pool_features
from .teacher import MaskGroups, TeacherField, build_teacher, lift_masks
from .vote import PointLabels, assign_semantics, collect_votes, evaluate, propagate

log = logging.getLogger(__name__)

STAGES = ("teacher", "losses", "superpoints", "diffusion", "primitives", "vote", "metrics")
PER_METHOD = ("diffusion", "primitives", "vote", "metrics")


@dataclass
class RunResult:
    out: Path
    executed: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    reports: dict = field(default_factory=dict)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _inputs_digest(paths, params) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(str(Path(p).name).encode())
        h.update(bytes.fromhex(file_digest(p)))
    h.update(json.dumps(params, sort_keys=True, default=str).encode())
    return h.hexdigest()


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _save_npy(path, arr) -> None:
    with open(path, "wb") as fh:
        np.save(fh, np.ascontiguousarray(arr), allow_pickle=False)


def scene_files(scene_dir: Path) -> list[Path]:
    doc = json.loads((scene_dir / "scene.json").read_text())
    files = [scene_dir / "scene.json", scene_dir / doc["points"]]
    for v in doc["views"]:
        files += [scene_dir / v["camera"], scene_dir / v["features"], scene_dir / v["masks"]]
    return files


class _Runner:
    def __init__(self, cfg: PipelineConfig, resume: bool):
        self.cfg = cfg
        self.out = cfg.out
        self.resume = resume
        self.manifest_path = self.out / "manifest.json"
        self.manifest = {}
        if resume and self.manifest_path.exists():
            self.manifest = json.loads(self.manifest_path.read_text())
        self.result = RunResult(self.out)
        self._scene = None

    @property
    def scene(self):
        if self._scene is None:
            self._scene = io.load_scene(self.cfg.scene)
        return self._scene

    def run(self, key: str, inputs, params, outputs, fn) -> None:
        try:
            digest = _inputs_digest(inputs, params)
        except (OSError, ValueError) as exc:
            raise StageError(key, "-" * 12, exc) from exc
        entry = self.manifest.get(key)
        if (self.resume and entry and entry["inputs"] == digest
                and all(p.exists() and entry["outputs"].get(p.name) == file_digest(p) for p in outputs)):
            log.info("stage %s: cached", key)
            self.result.skipped.append(key)
            return
        log.info("stage %s: running", key)
        try:
            fn()
        except (StageError, ConfigError, KeyboardInterrupt):
            raise
        except Exception as exc:
            raise StageError(key, digest, exc) from exc
        self.manifest[key] = {
            "inputs": digest,
            "outputs": {p.name: file_digest(p) for p in outputs},
        }
        _write_json(self.manifest_path, self.manifest)
        self.result.executed.append(key)

    # -- shared stages ---------------------------------------------------

    def teacher(self):
        cfg, out = self.cfg, self.out

        def body():
            scene = self.scene
            t = build_teacher(scene.cloud, scene.feature_views(), workers=cfg.workers)
            groups = lift_masks(scene.cloud, scene.mask_views(), cfg.mask, workers=cfg.workers)
            votes = PointLabels.from_lifted(groups.lifted, min_points=cfg.mask.min_mask_points)
            io.write_teacher(out / "teacher.ddst", t.features, t.visible, t.view_counts)
            _write_json(out / "masks.json", {
                "labels": groups.labels,
                "groups": [g.tolist() for g in groups.groups],
                "point_mask": groups.point_mask.tolist(),
                "votes": {"names": votes.names, "points": votes.points.tolist(),
                          "labels": votes.labels.tolist()},
            })

        self.run("teacher", scene_files(cfg.scene), asdict(cfg.mask),
                 [out / "teacher.ddst", out / "masks.json"], body)

    def _load_teacher(self) -> TeacherField:
        return TeacherField(*io.read_teacher(self.out / "teacher.ddst"))

    def _load_masks(self):
        doc = json.loads((self.out / "masks.json").read_text())
        groups = MaskGroups([np.array(g, dtype=np.int64) for g in doc["groups"]], doc["labels"],
                            np.array(doc["point_mask"], dtype=np.int64))
        v = doc["votes"]
        votes = PointLabels(np.array(v["points"], dtype=np.int64), np.array(v["labels"], dtype=np.int64),
                            v["names"])
        return groups, votes

    def losses(self):
        cfg, out = self.cfg, self.out

        def body():
            teacher = self._load_teacher()
            groups, _ = self._load_masks()
            # no backbone here: the student is the teacher itself, so this
            # reports the floor each loss reaches at perfect agreement
            student = teacher.features
            w = cfg.distill
            report = {"student": "teacher", "weights": asdict(w),
                      "n_points": teacher.n, "n_visible": int(teacher.visible.sum()),
                      "n_groups": groups.m, "point": loss_point(student, teacher)[0]}
            try:
                protos = compute_prototypes(student, teacher, groups, min_points=cfg.mask.min_mask_points)
                report["n_prototypes"] = protos.m
                report["proto"] = loss_proto(protos)[0]
                report["nce"] = loss_nce(protos, w.tau)[0]
                report["total"] = loss_total(student, teacher, groups, w,
                                             min_points=cfg.mask.min_mask_points)[0]
            except EmptyPrototypeSet as exc:
                report.update(n_prototypes=0, proto=None, nce=None, total=None, note=str(exc))
            _write_json(out / "losses.json", report)

        self.run("losses", [out / "teacher.ddst", out / "masks.json"],
                 {"distill": asdict(cfg.distill), "min_points": cfg.mask.min_mask_points},
                 [out / "losses.json"], body)

    def superpoints(self):
        cfg, out = self.cfg, self.out

        def body():
            cloud = self.scene.cloud
            teacher = self._load_teacher()
            part = oversegment(cloud, cfg.superpoint)
            vis = teacher.visible.astype(np.float64)
            # mean over the visible members only; all-hidden superpoints stay zero
            total = pool_features(part, teacher.features * vis[:, None])
            frac = pool_features(part, vis[:, None])
            F = np.divide(total, frac, out=np.zeros_like(total), where=frac > 0)
            io.write_partition(out / "partition.ddss", part.assignment, part.n_superpoints)
            _save_npy(out / "superpoints.npy", F)

        self.run("superpoints", [self.cfg.scene / "cloud.ddsp", out / "teacher.ddst"],
                 asdict(cfg.superpoint), [out / "partition.ddss", out / "superpoints.npy"], body)

    # -- per-method stages -------------------------------------------------

    def diffusion(self, method: str):
        cfg, out = self.cfg, self.out
        d = out / method

        def body():
            F = np.load(out / "superpoints.npy")
            info = {"method": method, "n_superpoints": F.shape[0]}
            if method == "pca":
                dims = min(cfg.cluster.embed_dims, F.shape[1], F.shape[0])
                H = pca_baseline(F, dims)
                info["dims"] = dims
            else:
                graph = build_graph(F)
                if method == "gft":
                    H = gft_baseline(graph, F, cfg.gft_keep_fraction)
                    info["keep_fraction"] = cfg.gft_keep_fraction
                elif cfg.solver == "closed_form":
                    H = diffuse_closed_form(graph, F, cfg.diffusion.alpha)
                    info["solver"] = "closed_form"
                else:
                    with warnings.catch_warnings(record=True) as caught:
                        warnings.simplefilter("always", NoConvergenceWarning)
                        H, iters = diffuse_iterative(graph, F, cfg.diffusion)
                    info.update(solver="iterative", iterations=iters,
                                converged=not any(issubclass(w.category, NoConvergenceWarning)
                                                  for w in caught))
            _save_npy(d / "features.npy", H)
            _write_json(d / "diffusion.json", info)

        params = {"method": method, "solver": cfg.solver, "diffusion": asdict(cfg.diffusion),
                  "gft": cfg.gft_keep_fraction, "embed_dims": cfg.cluster.embed_dims}
        self.run(f"diffusion/{method}", [out / "superpoints.npy"], params,
                 [d / "features.npy", d / "diffusion.json"], body)

    def primitives(self, method: str):
        cfg, d = self.cfg, self.out / method
        ccfg = cfg.cluster_cfg()

        def body():
            H = np.load(d / "features.npy")
            part = SuperpointPartition(*io.read_partition(self.out / "partition.ddss"))
            k = min(ccfg.k_primitive, H.shape[0])
            if k < ccfg.k_primitive:
                log.warning("k_primitive=%d clamped to %d superpoints", ccfg.k_primitive, k)
            model = fit_primitives(H, replace(ccfg, k_primitive=k))
            model.save(d / "primitives.json")
            _save_npy(d / "pseudo_labels.npy", model.primitive_of_superpoint[part.assignment])

        self.run(f"primitives/{method}", [d / "features.npy", self.out / "partition.ddss"],
                 asdict(ccfg), [d / "primitives.json", d / "pseudo_labels.npy"], body)

    def vote(self, method: str):
        cfg, d = self.cfg, self.out / method

        def body():
            labels = np.load(d / "pseudo_labels.npy")
            k = PrimitiveModel.load(d / "primitives.json").k
            _, votes = self._load_masks()
            table = collect_votes(labels, k, votes, eta=cfg.eta)
            names = assign_semantics(table)
            lab = propagate(labels, names)
            _write_json(d / "votes.json", {"names": table.names, "eta": cfg.eta,
                                           "counts": table.counts.tolist(), "cluster_names": names})
            _write_json(d / "point_names.json", lab.point_name)

        self.run(f"vote/{method}", [d / "pseudo_labels.npy", d / "primitives.json", self.out / "masks.json"],
                 {"eta": cfg.eta}, [d / "votes.json", d / "point_names.json"], body)

    def metrics(self, method: str):
        cfg, d = self.cfg, self.out / method
        cloud_path = cfg.scene / "cloud.ddsp"

        def body():
            cloud = io.read_points(cloud_path)
            names = json.loads((d / "point_names.json").read_text())
            class_names = list(self.scene.class_names)
            export_bev(cloud.positions, names, d / "bev.png", resolution=cfg.bev.resolution,
                       class_names=class_names or None)
            doc, text = {}, []
            if cloud.gt_class is not None:
                pred = np.load(d / "pseudo_labels.npy")
                matched = evaluate(pred, cloud.gt_class, "matched")
                doc["matched"] = matched.to_dict()
                text.append("matched\n" + matched.to_table(method))
                if class_names:
                    named = evaluate(names, cloud.gt_class, "named", class_names)
                    doc["named"] = named.to_dict()
                    text.append("named\n" + named.to_table(method))
            _write_json(d / "metrics.json", doc)
            (d / "metrics.txt").write_text("\n".join(text))

        self.run(f"metrics/{method}", [cloud_path, d / "pseudo_labels.npy", d / "point_names.json"],
                 {"bev": asdict(cfg.bev), "class_names": list(self.scene.class_names)},
                 [d / "metrics.json", d / "metrics.txt", d / "bev.png"], body)


def run_pipeline(cfg: PipelineConfig, stage: str | None = None, resume: bool = False) -> RunResult:
    """Run every stage up to and including ``stage`` (all stages by default).

    Returns the executed and cached stage keys and, when the metrics stage
    ran, ``reports[method] = {"matched": ..., "named": ...}`` as dicts.
    """
    if stage is not None and stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}; choose from {STAGES}")
    if not (cfg.scene / "scene.json").is_file():
        raise ConfigError(f"scene directory {cfg.scene} has no scene.json")
    last = STAGES.index(stage) if stage else len(STAGES) - 1
    cfg.out.mkdir(parents=True, exist_ok=True)
    runner = _Runner(cfg, resume)
    for name in STAGES[:last + 1]:
        if name in PER_METHOD:
            for method in cfg.methods:
                (cfg.out / method).mkdir(exist_ok=True)
                getattr(runner, name)(method)
        else:
            getattr(runner, name)()
    if last == len(STAGES) - 1:
        for method in cfg.methods:
            runner.result.reports[method] = json.loads((cfg.out / method / "metrics.json").read_text())
    return runner.result
