"""Distillation objective on point features, with analytical gradients.

Gradients are taken with respect to student quantities only; teacher
features are constants.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNorm, EmptyPrototypeSet, InvalidInput
from .teacher import MaskGroups, TeacherField

NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class DistillWeights:
    lambda_point: float = 1.0
    lambda_proto: float = 1.0
    lambda_nce: float = 0.3
    tau: float = 0.07

    def __post_init__(self):
        if min(self.lambda_point, self.lambda_proto, self.lambda_nce) < 0:
            raise InvalidInput("loss weights must be non-negative")
        if not self.tau > 0:
            raise InvalidInput("tau must be positive")


@dataclass(frozen=True)
class PrototypePair:
    student: np.ndarray
    teacher: np.ndarray
    mask_sizes: np.ndarray
    mask_ids: np.ndarray
    members: list

    @property
    def m(self) -> int:
        return self.student.shape[0]


def _norms(x: np.ndarray) -> np.ndarray:
    n = np.sqrt(np.einsum("ij,ij->i", x, x))
    if n.size and n.min() < NORM_FLOOR:
        raise DegenerateNorm(f"row norm {n.min():.3g} below {NORM_FLOOR}")
    return n


def _cosine_with_grad(x: np.ndarray, y: np.ndarray):
    """Row-wise cos(x_i, y_i) and its gradient with respect to x."""
    nx, ny = _norms(x), _norms(y)
    xh, yh = x / nx[:, None], y / ny[:, None]
    cos = np.einsum("ij,ij->i", xh, yh)
    grad = (yh - cos[:, None] * xh) / nx[:, None]
    return cos, grad


def compute_prototypes(student, teacher: TeacherField, groups: MaskGroups, *,
                       min_points: int = 10) -> PrototypePair:
    """Mean student and teacher feature over the visible members of each mask group.

    Groups with fewer than ``min_points`` visible members are left out.
    """
    z = np.asarray(student, dtype=np.float64)
    if z.shape != teacher.features.shape:
        raise InvalidInput(f"student shape {z.shape} != teacher shape {teacher.features.shape}")
    ps, pt, sizes, ids, members = [], [], [], [], []
    for m, grp in enumerate(groups.groups, start=1):
        idx = np.asarray(grp, dtype=np.int64)
        idx = idx[teacher.visible[idx]]
        if len(idx) < min_points or len(idx) == 0:
            continue
        ps.append(z[idx].sum(axis=0) / len(idx))
        pt.append(teacher.features[idx].sum(axis=0) / len(idx))
        sizes.append(len(idx))
        ids.append(m)
        members.append(idx)
    if not ps:
        raise EmptyPrototypeSet("no mask group has enough visible points")
    return PrototypePair(np.array(ps), np.array(pt), np.array(sizes), np.array(ids), members)


def loss_point(student, teacher: TeacherField):
    """Mean ``1 - cos(z_i, t_i)`` over visible points; returns ``(value, grad)``."""
    z = np.asarray(student, dtype=np.float64)
    grad = np.zeros_like(z)
    vis = np.flatnonzero(teacher.visible)
    if len(vis) == 0:
        return 0.0, grad
    cos, dcos = _cosine_with_grad(z[vis], teacher.features[vis])
    grad[vis] = -dcos / len(vis)
    return float(np.mean(1.0 - cos)), grad


def loss_proto(protos: PrototypePair):
    cos, dcos = _cosine_with_grad(protos.student, protos.teacher)
    return float(np.mean(1.0 - cos)), -dcos / protos.m


def loss_nce(protos: PrototypePair, tau: float):
    """InfoNCE over prototypes: row m of the normalized student/teacher
    similarity matrix uses teacher prototype m as its positive."""
    if not tau > 0:
        raise InvalidInput("tau must be positive")
    ps = protos.student
    ns = _norms(ps)
    ps_hat = ps / ns[:, None]
    pt_hat = protos.teacher / _norms(protos.teacher)[:, None]
    m = ps.shape[0]
    logits = ps_hat @ pt_hat.T / tau
    top = logits.max(axis=1)
    lse = top + np.log(np.exp(logits - top[:, None]).sum(axis=1))
    value = float(np.mean(lse - np.diag(logits)))
    dlogits = np.exp(logits - lse[:, None])
    dlogits[np.diag_indices(m)] -= 1.0
    dlogits /= m * tau
    d_hat = dlogits @ pt_hat
    radial = np.einsum("ij,ij->i", d_hat, ps_hat)
    grad = (d_hat - radial[:, None] * ps_hat) / ns[:, None]
    return value, grad


def loss_total(student, teacher: TeacherField, groups: MaskGroups,
               weights: DistillWeights = DistillWeights(), *, min_points: int = 10):
    """Weighted sum of the per-point loss and the two prototype-level losses.

    Prototype gradients flow back to each contributing point row scaled by
    ``1 / |mask|``.
    """
    value, grad = 0.0, np.zeros_like(np.asarray(student, dtype=np.float64))
    if weights.lambda_point:
        v, g = loss_point(student, teacher)
        value += weights.lambda_point * v
        grad += weights.lambda_point * g
    if weights.lambda_proto or weights.lambda_nce:
        protos = compute_prototypes(student, teacher, groups, min_points=min_points)
        gp = np.zeros_like(protos.student)
        if weights.lambda_proto:
            v, g = loss_proto(protos)
            value += weights.lambda_proto * v
            gp += weights.lambda_proto * g
        if weights.lambda_nce:
            v, g = loss_nce(protos, weights.tau)
            value += weights.lambda_nce * v
            gp += weights.lambda_nce * g
        for row, idx in enumerate(protos.members):
            grad[idx] += gp[row] / len(idx)
    return value, grad


# -- finite-difference checking --------------------------------------------------

def central_difference(fn, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Numerical gradient of scalar ``fn`` at ``x`` by central differences."""
    x = np.array(x, dtype=np.float64)
    out = np.zeros_like(x)
    flat, gflat = x.reshape(-1), out.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        hi = fn(x)
        flat[k] = orig - step
        lo = fn(x)
        flat[k] = orig
        gflat[k] = (hi - lo) / (2 * step)
    return out


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Largest elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def random_instance(rng: np.random.Generator, n: int, m: int, c: int, *, min_points: int = 2):
    """Random student/teacher/mask-group triple with every row norm away from zero."""
    if m * min_points > n:
        raise InvalidInput("not enough points for the requested masks")
    student = rng.normal(size=(n, c))
    feats = rng.normal(size=(n, c))
    visible = rng.random(n) < 0.85
    perm = rng.permutation(n)
    covered = int(rng.integers(m * min_points, n + 1))
    sizes = min_points + rng.multinomial(covered - m * min_points, np.ones(m) / m)
    point_mask = np.full(n, -1, dtype=np.int64)
    groups, start = [], 0
    for k, size in enumerate(sizes, start=1):
        idx = np.sort(perm[start:start + size])
        visible[idx[:min_points]] = True
        point_mask[idx] = k
        groups.append(idx)
        start += size
    feats[~visible] = 0.0
    teacher = TeacherField(feats, visible, visible.astype(np.int64))
    return student, teacher, MaskGroups(groups, [f"m{k}" for k in range(m)], point_mask)


def check_gradients(n_instances: int = 50, seed: int = 0, weights: DistillWeights = DistillWeights(),
                    step: float = 1e-5) -> dict[str, float]:
    """Worst relative error between analytical and central-difference gradients for each loss."""
    rng = np.random.default_rng(seed)
    worst = {"point": 0.0, "proto": 0.0, "nce": 0.0, "total": 0.0}
    for _ in range(n_instances):
        m = int(rng.integers(1, 11))
        c = int(rng.integers(2, 17))
        n = int(rng.integers(max(2 * m, 4), 101))
        z, teacher, groups = random_instance(rng, n, m, c)
        tau = float(rng.choice([0.07, 0.3, 1.0]))
        base = compute_prototypes(z, teacher, groups, min_points=2)

        def protos_of(ps, base=base):
            return PrototypePair(ps, base.teacher, base.mask_sizes, base.mask_ids, base.members)

        checks = {
            "point": (lambda x: loss_point(x, teacher)[0], loss_point(z, teacher)[1], z),
            "proto": (lambda p: loss_proto(protos_of(p))[0], loss_proto(base)[1], base.student),
            "nce": (lambda p: loss_nce(protos_of(p), tau)[0], loss_nce(base, tau)[1], base.student),
            "total": (lambda x: loss_total(x, teacher, groups, weights, min_points=2)[0],
                      loss_total(z, teacher, groups, weights, min_points=2)[1], z),
        }
        for name, (fn, analytic, x0) in checks.items():
            numeric = central_difference(fn, x0, step)
            worst[name] = max(worst[name], max_relative_error(analytic, numeric))
    return worst
