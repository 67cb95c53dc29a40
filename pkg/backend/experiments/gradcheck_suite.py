"""Finite-difference checks for every catalog op and three tiny end-to-end models."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from autograd import OP_CATALOG, Tensor, check_gradients, constant, ops
from errors import GradCheckError
from models.defusion import DeFusionNet, ModelConfig
from models.image_extractor import ImageExtractor, ImageExtractorConfig
from models.table_extractor import TableExtractor, TableExtractorConfig

logger = logging.getLogger(__name__)

THRESHOLD = 1e-4
ROUNDOFF_ATOL = 1e-9

# (inputs to perturb, function of those inputs returning the op output)
OpCase = tuple[list[Tensor], Callable[[], Tensor]]


def _leaf(values: np.ndarray) -> Tensor:
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=True)


def _normal(rng: np.random.Generator, *shape: int) -> Tensor:
    return _leaf(rng.normal(size=shape))


def _away_from_zero(rng: np.random.Generator, *shape: int, margin: float = 0.2) -> np.ndarray:
    u = rng.normal(size=shape)
    return np.sign(u) * (margin + np.abs(u))


# ─── Op cases ────────────────────────────────────────────────────────


def _binary(op):
    def build(rng):
        a, b = _normal(rng, 3, 4), _normal(rng, 3, 4)
        return [a, b], lambda: op(a, b)

    return build


def _unary(op, *shape):
    def build(rng):
        a = _normal(rng, *shape)
        return [a], lambda: op(a)

    return build


def _case_matmul(rng) -> OpCase:
    a, b = _normal(rng, 2, 3, 4), _normal(rng, 2, 4, 5)
    return [a, b], lambda: ops.matmul(a, b)


def _case_concat(rng) -> OpCase:
    a, b = _normal(rng, 2, 3), _normal(rng, 2, 2)
    return [a, b], lambda: ops.concat([a, b], axis=1)


def _case_relu(rng) -> OpCase:
    a = _leaf(_away_from_zero(rng, 3, 4))
    return [a], lambda: ops.relu(a)


def _case_log(rng) -> OpCase:
    a = _leaf(0.5 + rng.uniform(size=(3, 4)))
    return [a], lambda: ops.log(a)


def _case_clip(rng) -> OpCase:
    centres = rng.choice([-1.8, -1.4, -0.6, -0.2, 0.3, 0.7, 1.3, 1.9], size=(3, 4))
    a = _leaf(centres + rng.uniform(-0.05, 0.05, size=(3, 4)))
    return [a], lambda: ops.clip(a, -1.0, 1.0)


def _case_layer_norm(rng) -> OpCase:
    x, w, b = _normal(rng, 3, 6), _normal(rng, 6), _normal(rng, 6)
    return [x, w, b], lambda: ops.layer_norm(x, -1, w, b)


def _case_linear(rng) -> OpCase:
    x, w, b = _normal(rng, 3, 4), _normal(rng, 4, 5), _normal(rng, 5)
    return [x, w, b], lambda: ops.linear(x, w, b)


def _case_conv2d(rng) -> OpCase:
    x, w, b = _normal(rng, 2, 2, 6, 6), _normal(rng, 3, 2, 3, 3), _normal(rng, 3)
    return [x, w, b], lambda: ops.conv2d(x, w, b, stride=2, padding=1)


def _case_l1_distance(rng) -> OpCase:
    a = _normal(rng, 3, 5)
    b = _leaf(a.data + _away_from_zero(rng, 3, 5))
    return [a, b], lambda: ops.l1_distance(a, b, axis=-1)


OP_CASES: dict[str, Callable[[np.random.Generator], OpCase]] = {
    "add": _binary(ops.add),
    "sub": _binary(ops.sub),
    "mul": _binary(ops.mul),
    "scale": _unary(lambda a: ops.scale(a, 1.7), 3, 4),
    "neg": _unary(ops.neg, 3, 4),
    "matmul": _case_matmul,
    "concat": _case_concat,
    "reshape": _unary(lambda a: ops.reshape(a, (3, 4)), 2, 6),
    "transpose": _unary(lambda a: ops.transpose(a, (2, 0, 1)), 2, 3, 4),
    "broadcast": _unary(lambda a: ops.broadcast(a, (3, 4)), 1, 4),
    "narrow": _unary(lambda a: ops.narrow(a, 1, 1, 3), 3, 5),
    "relu": _case_relu,
    "sigmoid": _unary(ops.sigmoid, 3, 4),
    "log": _case_log,
    "clip": _case_clip,
    "softmax": _unary(lambda a: ops.softmax(a, axis=-1), 3, 5),
    "layer_norm": _case_layer_norm,
    "linear": _case_linear,
    "conv2d": _case_conv2d,
    "mean_pool2d": _unary(lambda a: ops.mean_pool2d(a, 2), 2, 3, 4, 4),
    "global_avg_pool": _unary(ops.global_avg_pool, 2, 3, 4, 4),
    "sum_reduce": _unary(lambda a: ops.sum_reduce(a, axis=1), 3, 4),
    "mean_reduce": _unary(lambda a: ops.mean_reduce(a, axis=0), 3, 4),
    "l1_distance": _case_l1_distance,
}


def projected_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    """sum(out * R) for a fixed random R; reaches every output coordinate."""
    return ops.sum_reduce(ops.mul(out, constant(weights)))


# ─── Results ─────────────────────────────────────────────────────────


@dataclass
class CheckOutcome:
    name: str
    max_error: float
    checked: int
    skipped: int

    @property
    def passed(self) -> bool:
        return self.max_error <= THRESHOLD


@dataclass
class SuiteReport:
    suites: dict[str, list[CheckOutcome]] = field(default_factory=dict)
    seconds: float = 0.0

    def suite_max(self, suite: str) -> float:
        return max((o.max_error for o in self.suites[suite]), default=0.0)

    @property
    def passed(self) -> bool:
        return all(o.passed for outcomes in self.suites.values() for o in outcomes)

    def render(self) -> str:
        lines = []
        for suite, outcomes in self.suites.items():
            lines.append(f"[{suite}] max relative error {self.suite_max(suite):.3e}")
            for o in outcomes:
                status = "ok" if o.passed else "FAIL"
                lines.append(
                    f"  {o.name:<24} {o.max_error:.3e}  checked={o.checked} skipped={o.skipped}  {status}"
                )
        lines.append(f"{'PASS' if self.passed else 'FAIL'} ({self.seconds:.1f}s, threshold {THRESHOLD:g})")
        return "\n".join(lines)


def check_op(name: str, seed: int = 0) -> CheckOutcome:
    if name not in OP_CASES:
        raise GradCheckError(f"no gradient check case for op '{name}'")
    rng = np.random.default_rng(seed)
    inputs, forward = OP_CASES[name](rng)
    weights = rng.normal(size=forward().shape)
    result = check_gradients(lambda: projected_sum(forward(), weights), inputs, atol=ROUNDOFF_ATOL)
    return CheckOutcome(name, result.max_error, result.checked, result.skipped)


# ─── Tiny models ─────────────────────────────────────────────────────

TINY_IMAGE = ImageExtractorConfig(
    image_size=16, num_days=2, stride=8, channels=4, res_blocks=1, d_model=4, heads=2, layers=1, mlp_ratio=2
)
TINY_TABLE = TableExtractorConfig(num_indicators=4, d_model=4, heads=2, layers=1, mlp_ratio=2)
TINY_MODEL = ModelConfig(image=TINY_IMAGE, table=TINY_TABLE, d_f=4, m=4, fusion_hidden=8, classifier_hidden=8)

# (pe, days) pairs for the extractor suite; every STPE variant runs over three days
IMAGE_SUITE = (
    ("stpe", 2),
    ("stpe", 3),
    ("stpe_no_att", 3),
    ("stpe_no_spe", 3),
    ("stpe_no_tpe", 3),
    ("learnable", 2),
)


def _check_module(name: str, module, loss_fn: Callable[[], Tensor], max_checks: int, seed: int) -> CheckOutcome:
    params = [p for _, p in module.named_parameters()]
    result = check_gradients(
        loss_fn,
        params,
        max_checks_per_param=max_checks,
        rng=np.random.default_rng(seed),
        atol=ROUNDOFF_ATOL,
    )
    return CheckOutcome(name, result.max_error, result.checked, result.skipped)


def check_image_extractor(pe: str = "stpe", seed: int = 0, max_checks: int = 6, num_days: int = 2) -> CheckOutcome:
    rng = np.random.default_rng(seed)
    config = replace(TINY_IMAGE, pe=pe, num_days=num_days)
    extractor = ImageExtractor(config, rng)
    images = constant(rng.normal(size=(2, config.num_days, config.image_size, config.image_size)))
    weights = rng.normal(size=(2, config.d_model))
    name = f"image_extractor[{pe}, T={num_days}]"
    return _check_module(name, extractor, lambda: projected_sum(extractor(images)[1], weights), max_checks, seed)


def check_table_extractor(seed: int = 0, max_checks: int = 8) -> CheckOutcome:
    rng = np.random.default_rng(seed)
    extractor = TableExtractor(TINY_TABLE, rng)
    table = constant(rng.uniform(size=(2, TINY_TABLE.num_indicators)))
    weights = rng.normal(size=(2, TINY_TABLE.d_model))
    return _check_module("table_extractor", extractor, lambda: projected_sum(extractor(table)[1], weights), max_checks, seed)


def check_defusion(seed: int = 0, max_checks: int = 4, lam: float = 1.0) -> CheckOutcome:
    rng = np.random.default_rng(seed)
    model = DeFusionNet(TINY_MODEL, rng)
    images = constant(rng.normal(size=(2, TINY_IMAGE.num_days, TINY_IMAGE.image_size, TINY_IMAGE.image_size)))
    table = constant(rng.uniform(size=(2, TINY_TABLE.num_indicators)))
    labels = np.array([0, 1])

    def loss() -> Tensor:
        return model.loss(model(images, table), labels, lam)[0]

    return _check_module("defusion", model, loss, max_checks, seed)


def run_suite(ops_only: Optional[list[str]] = None, seed: int = 0) -> SuiteReport:
    """All op checks plus the image, table and full-model checks."""
    started = time.perf_counter()
    report = SuiteReport()
    names = ops_only or list(OP_CATALOG)
    report.suites["ops"] = [check_op(name, seed) for name in names]
    if ops_only is None:
        report.suites["image_extractor"] = [
            check_image_extractor(pe, seed, num_days=days) for pe, days in IMAGE_SUITE
        ]
        report.suites["table_extractor"] = [check_table_extractor(seed)]
        report.suites["defusion"] = [check_defusion(seed)]
    report.seconds = time.perf_counter() - started
    for suite in report.suites:
        logger.info("Gradient check %s: max relative error %.3e", suite, report.suite_max(suite))
    return report
