"""Numeric audit: gradient-check every differentiable op and both losses.

Each op is checked on many random shapes against central finite differences
in float64. The full model losses are checked on miniature configurations by
differentiating with respect to every parameter tensor.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .nn.gradcheck import grad_check
from .models.classifier import ClassifierConfig, ShotClassifier, classifier_loss
from .models.detector import DetectorConfig, ShotDetector, detector_loss

OP_TOLERANCE = 1e-4
LOSS_TOLERANCE = 1e-3


@dataclass
class AuditReport:
    results: dict = field(default_factory=dict)  # name -> (max_rel_error, tolerance)
    elapsed_s: float = 0.0

    @property
    def passed(self) -> bool:
        return all(err < tol for err, tol in self.results.values())

    def lines(self) -> list:
        out = []
        for name, (err, tol) in self.results.items():
            status = "ok" if err < tol else "FAIL"
            out.append(f"{status:4s} {name:<28s} max rel error {err:.3e} (tol {tol:g})")
        out.append(f"{'PASS' if self.passed else 'FAIL'}: numeric audit "
                   f"in {self.elapsed_s:.1f} s")
        return out


def _check_op(name, fn, make_inputs, rng, n_shapes, results, tolerance=OP_TOLERANCE):
    worst = 0.0
    for _ in range(n_shapes):
        report = grad_check(fn, make_inputs(rng), tolerance=tolerance)
        worst = max(worst, report.max_rel_error)
    results[name] = (worst, tolerance)


def _set_param(module, dotted: str, tensor) -> None:
    parts = dotted.split(".")
    obj = module
    for p in parts[:-1]:
        obj = obj[int(p)] if p.isdigit() else getattr(obj, p)
    setattr(obj, parts[-1], tensor)


def _check_model_loss(name, build, results) -> None:
    """Gradient-check a full loss with respect to every parameter."""
    model, loss_of_model = build()
    names = list(model.named_parameters())
    initial = [model.named_parameters()[n].data.astype(np.float64) for n in names]

    def fn(*tensors):
        for pname, t in zip(names, tensors):
            _set_param(model, pname, t)
        return loss_of_model(model)

    report = grad_check(fn, initial, tolerance=LOSS_TOLERANCE)
    results[name] = (report.max_rel_error, LOSS_TOLERANCE)


def run_audit(seed: int = 0, n_shapes: int = 20) -> AuditReport:
    started = time.time()
    rng = np.random.default_rng(seed)
    results: dict = {}

    def rand(*shape):
        return rng.normal(size=shape)

    def pair(rng):
        shape = tuple(rng.integers(1, 6, size=rng.integers(1, 4)))
        return [rng.normal(size=shape), rng.normal(size=shape)]

    def broadcast_pair(rng):
        b, c, l = rng.integers(1, 6, size=3)
        return [rng.normal(size=(b, c, l)), rng.normal(size=(1, 1, l))]

    _check_op("add", nn.add, pair, rng, n_shapes, results)
    _check_op("mul", nn.mul, pair, rng, n_shapes, results)
    _check_op("mul (broadcast)", nn.mul, broadcast_pair, rng, n_shapes, results)

    def linear_inputs(rng):
        b, f, o = rng.integers(1, 7, size=3)
        return [rng.normal(size=(b, f)), rng.normal(size=(o, f)), rng.normal(size=(o,))]

    _check_op("linear", nn.linear, linear_inputs, rng, n_shapes, results)

    for dilation in (1, 2, 3):
        def conv_inputs(rng, d=dilation):
            b, c, o = rng.integers(1, 5, size=3)
            k = int(rng.choice([1, 3, 5]))
            l = int(rng.integers((k - 1) * d + 1, 16))
            return [rng.normal(size=(b, c, l)), rng.normal(size=(o, c, k)),
                    rng.normal(size=(o,))]

        _check_op(f"conv1d (dilation {dilation})",
                  lambda x, w, b, d=dilation: nn.conv1d(x, w, b, dilation=d),
                  conv_inputs, rng, n_shapes, results)

    def unary_inputs(rng):
        shape = tuple(rng.integers(1, 6, size=rng.integers(1, 4)))
        return [rng.normal(size=shape) * 3.0]

    _check_op("relu", nn.relu, unary_inputs, rng, n_shapes, results)
    _check_op("sigmoid", nn.sigmoid, unary_inputs, rng, n_shapes, results)
    _check_op("mish", nn.mish, unary_inputs, rng, n_shapes, results)

    def gap_inputs(rng):
        b, c, l = rng.integers(1, 7, size=3)
        return [rng.normal(size=(b, c, l))]

    _check_op("gap", nn.gap, gap_inputs, rng, n_shapes, results)
    _check_op("softmax", lambda x: nn.softmax(x, axis=1), gap_inputs, rng,
              n_shapes, results)

    for training in (True, False):
        def bn_inputs(rng):
            b, c, l = int(rng.integers(2, 6)), int(rng.integers(1, 5)), int(rng.integers(2, 8))
            return [rng.normal(size=(b, c, l)), rng.normal(size=(c,)), rng.normal(size=(c,))]

        def bn_fn(x, gamma, beta, training=training):
            c = gamma.shape[0]
            return nn.batch_norm(x, gamma, beta,
                                 np.zeros(c), np.ones(c),
                                 training=training, update_running=False)

        _check_op(f"batch_norm ({'train' if training else 'eval'})",
                  bn_fn, bn_inputs, rng, n_shapes, results)

    def wce_state(rng):
        n, c = int(rng.integers(1, 7)), int(rng.integers(2, 7))
        return (rng.integers(0, c, size=n), rng.uniform(0.5, 3.0, size=c),
                [rng.normal(size=(n, c))])

    worst = 0.0
    for _ in range(n_shapes):
        targets, weights, inputs = wce_state(rng)
        rep = grad_check(lambda z: nn.weighted_cross_entropy(z, targets, weights), inputs)
        worst = max(worst, rep.max_rel_error)
    results["weighted_cross_entropy"] = (worst, OP_TOLERANCE)

    # Full model losses on miniature configurations.
    def build_classifier():
        cfg = ClassifierConfig(segment_len=16, kernel=3,
                               sub_block_channels=(2, 2, 3, 2),
                               backbone_channels=(3, 2),
                               attention_classifier_channels=2)
        model = ShotClassifier(cfg, seed=seed)
        local = np.random.default_rng(seed + 1)
        x = local.normal(size=(2, 6, 16))
        y = local.integers(0, 6, size=2)

        def loss_of_model(m):
            return classifier_loss(m.forward(x, training=True), y)

        return model, loss_of_model

    def build_detector():
        cfg = DetectorConfig(stages=2, layers_per_stage=2, hidden=2)
        model = ShotDetector(cfg, seed=seed)
        local = np.random.default_rng(seed + 2)
        x = local.normal(size=(1, 6, 12))
        y = local.integers(0, 2, size=12)

        def loss_of_model(m):
            return detector_loss(m.forward(x), y, cfg.class_weight_positive)

        return model, loss_of_model

    _check_model_loss("classifier_loss (full model)", build_classifier, results)
    _check_model_loss("detector_loss (full model)", build_detector, results)

    return AuditReport(results=results, elapsed_s=time.time() - started)
