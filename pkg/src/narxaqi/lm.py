"""Levenberg-Marquardt training of NARX networks.

Residuals are ``e = target - output`` in normalized space, the objective is
``E = 0.5 * sum(e**2)`` and each step solves ``(J^T J + mu I) dw = -J^T e``.
The second-order residual term of the exact Hessian is deliberately dropped
(Gauss-Newton approximation).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .dataset import SupervisedFrame
from .errors import TrainingError
from .narx import (NarxNetwork, NarxTopology, act_derivative, forward_batch,
                   normalized_inputs, normalized_targets)

STOP_REASONS = ("gradient", "error_goal", "max_epochs", "validation", "mu_max")


@dataclass(frozen=True)
class TrainConfig:
    mu0: float = 1e-3
    beta: float = 10.0
    mu_max: float = 1e10
    grad_tol: float = 1e-7
    error_goal: float = 0.0
    max_epochs: int = 1000
    val_patience: int = 6
    seed: int = 0

    def __post_init__(self):
        if not self.mu0 > 0:
            raise ValueError("mu0 must be > 0")
        if not self.beta > 1:
            raise ValueError("beta must be > 1")
        if not self.mu_max >= self.mu0:
            raise ValueError("mu_max must be >= mu0")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be > 0")
        if self.error_goal < 0:
            raise ValueError("error_goal must be >= 0")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.val_patience < 1:
            raise ValueError("val_patience must be >= 1")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    E: float
    grad_norm: float  # at the weights the step started from
    mu: float  # after the acceptance update
    val_E: float  # nan when validation is disabled


@dataclass
class TrainTrace:
    initial_E: float
    epochs: list[EpochRecord] = field(default_factory=list)
    stop_reason: Optional[str] = None
    # ("accept" | "reject", mu_before, mu_after) in order of occurrence
    mu_events: list[tuple[str, float, float]] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def accepted(self) -> int:
        return len(self.epochs)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["epoch", "E", "grad_norm", "mu", "val_E"])
        for r in self.epochs:
            wr.writerow([r.epoch, repr(r.E), repr(r.grad_norm), repr(r.mu), repr(r.val_E)])
        return buf.getvalue()


class SingularSystem(ArithmeticError):
    """The damped normal equations are not numerically positive definite."""


def errors(net: NarxNetwork, frame: SupervisedFrame) -> np.ndarray:
    y, _ = forward_batch(net.topology, net.w, normalized_inputs(net, frame))
    return normalized_targets(net, frame) - y


def sse(e) -> float:
    e = np.asarray(e, dtype=float)
    return 0.5 * float(np.dot(e, e))


def _jacobian(topology: NarxTopology, w: np.ndarray, X: np.ndarray, cache=None) -> np.ndarray:
    if cache is None:
        _, cache = forward_batch(topology, w, X)
    layers = topology.unpack(w)
    L = len(layers)
    n = X.shape[0]
    blocks = [None] * L
    # identity output: delta^L = -f'(net^L) = -1
    delta = -np.ones((n, 1))
    for k in range(L, 0, -1):
        o_prev = cache.outs[k - 1]
        dW = (delta[:, :, None] * o_prev[:, None, :]).reshape(n, -1)
        blocks[k - 1] = np.concatenate([dW, delta], axis=1)
        if k > 1:
            W = layers[k - 1][0]
            back = (delta[:, :, None] * W[None, :, :]).sum(axis=1)
            delta = act_derivative(topology.activation, cache.outs[k - 1]) * back
    return np.concatenate(blocks, axis=1)


def jacobian(net: NarxNetwork, frame: SupervisedFrame) -> np.ndarray:
    """N x P matrix of d e_q / d w_p by backpropagation."""
    return _jacobian(net.topology, net.w, normalized_inputs(net, frame))


def gradient(J, e) -> np.ndarray:
    return np.asarray(J).T @ np.asarray(e)


def _damped_solve(JtJ: np.ndarray, g: np.ndarray, mu: float) -> np.ndarray:
    A = JtJ + mu * np.eye(JtJ.shape[0])
    try:
        factor = scipy.linalg.cho_factor(A, lower=False, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystem(str(exc)) from exc
    dw = -scipy.linalg.cho_solve(factor, g)
    if not np.all(np.isfinite(dw)):
        raise SingularSystem("non-finite step")
    return dw


def lm_step(J, e, mu: float) -> np.ndarray:
    """Solve ``(J^T J + mu I) dw = -J^T e``; raises :class:`SingularSystem`."""
    if mu < 0:
        raise ValueError("mu must be >= 0")
    J = np.asarray(J, dtype=float)
    return _damped_solve(J.T @ J, gradient(J, e), mu)


def train(net: NarxNetwork, train_frame: SupervisedFrame,
          val_frame: Optional[SupervisedFrame] = None,
          config: TrainConfig = TrainConfig()) -> tuple[NarxNetwork, TrainTrace]:
    """Levenberg-Marquardt training loop.

    A step is accepted only if it lowers E; then mu is divided by beta and a
    fresh Jacobian is computed. A rejected step multiplies mu by beta and
    re-solves with the same Jacobian. Stops on small gradient, error goal,
    epoch budget, mu exceeding ``mu_max``, or ``val_patience`` consecutive
    epochs whose validation error fails to beat the best so far. With
    validation the best-validation weights are returned.
    """
    if len(train_frame) == 0:
        raise ValueError("empty training frame")
    # overflow in a trial step is turned into a rejection below, not an exception
    with np.errstate(over="ignore", invalid="ignore"):
        return _train(net, train_frame, val_frame, config)


def _train(net, train_frame, val_frame, config):
    topo = net.topology
    X = normalized_inputs(net, train_frame)
    T = normalized_targets(net, train_frame)
    use_val = val_frame is not None and len(val_frame) > 0
    if use_val:
        Xv = normalized_inputs(net, val_frame)
        Tv = normalized_targets(net, val_frame)

    def val_error(w):
        return sse(Tv - forward_batch(topo, w, Xv)[0]) if use_val else math.nan

    w = net.w.copy()
    y, cache = forward_batch(topo, w, X)
    e = T - y
    E = sse(e)
    trace = TrainTrace(initial_E=E)
    if not math.isfinite(E):
        raise TrainingError("non-finite training error at initialization", epoch=0,
                            trace=trace)
    best_val = val_error(w)
    if use_val and not math.isfinite(best_val):
        raise TrainingError("non-finite validation error at initialization", epoch=0,
                            trace=trace)
    best_w = w
    fails = 0
    mu = config.mu0
    epoch = 0

    while True:
        if E <= config.error_goal:
            trace.stop_reason = "error_goal"
            break
        J = _jacobian(topo, w, X, cache)
        g = J.T @ e
        gnorm = float(np.linalg.norm(g))
        if gnorm < config.grad_tol:
            trace.stop_reason = "gradient"
            break
        if epoch >= config.max_epochs:
            trace.stop_reason = "max_epochs"
            break
        JtJ = J.T @ J
        while True:
            try:
                dw = _damped_solve(JtJ, g, mu)
            except SingularSystem:
                dw = None
            if dw is not None:
                w_new = w + dw
                y_new, cache_new = forward_batch(topo, w_new, X)
                e_new = T - y_new
                E_new = sse(e_new)
                if E_new < E:
                    trace.mu_events.append(("accept", mu, mu / config.beta))
                    mu = mu / config.beta
                    break
            if mu * config.beta > config.mu_max:
                trace.stop_reason = "mu_max"
                break
            trace.mu_events.append(("reject", mu, mu * config.beta))
            mu = mu * config.beta
        if trace.stop_reason:
            break

        epoch += 1
        w, e, E, cache = w_new, e_new, E_new, cache_new
        v = val_error(w)
        if use_val and not math.isfinite(v):
            raise TrainingError("non-finite validation error", epoch=epoch, trace=trace)
        trace.epochs.append(EpochRecord(epoch, E, gnorm, mu, v))
        if use_val:
            if v < best_val:
                best_val, best_w, fails = v, w, 0
                trace.best_epoch = epoch
            else:
                fails += 1
                if fails >= config.val_patience:
                    trace.stop_reason = "validation"
                    break

    final = best_w if use_val else w
    if not use_val:
        trace.best_epoch = epoch
    return net.with_weights(final), trace
