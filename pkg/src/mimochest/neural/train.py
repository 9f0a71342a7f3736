"""Levenberg-Marquardt training with validation-based early stopping.

The Gauss-Newton matrix is accumulated per training row rather than per
(row, output): for layers l and m the block of J^T J equals

    sum_r (D_l[r]^T D_m[r]) kron (a_{l-1}[r] a_{m-1}[r]^T)

where D_l[r] stacks the output sensitivities of layer l's pre-activations and
a_{l-1}[r] is the (bias-augmented) input of layer l.  This is exact and saves a
factor n_out over forming J explicitly.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg

from .dataset import TapDataset
from .mlp import MlpModel, _forward_all, backprop_deltas

__all__ = ["TrainConfig", "TrainingDiverged", "train", "gauss_newton_terms"]

log = logging.getLogger(__name__)

LAMBDA_MIN = 1e-10
LAMBDA_MAX = 1e10


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch, loss):
        super().__init__(f"training diverged at epoch {epoch}: loss {loss!r}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 300
    target_loss: float = 1e-5
    min_gradient: float = 1e-7
    initial_damping: float = 0.01
    max_validation_failures: int = 6
    seed: int = 0
    algorithm: str = "lm"  # or "sgd": mini-batch gradient descent fallback
    batch_size: int = 8
    learning_rate: float = 0.01
    chunk_rows: int = 2048

    def __post_init__(self):
        for name in ("max_epochs", "target_loss", "min_gradient", "initial_damping",
                     "max_validation_failures", "batch_size", "learning_rate", "chunk_rows"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.algorithm not in ("lm", "sgd"):
            raise ValueError(f"unknown training algorithm {self.algorithm!r}")


def _augment(a):
    return np.hstack((a, np.ones((a.shape[0], 1))))


def _loss(model: MlpModel, x, y) -> float:
    if x.shape[0] == 0:
        return float("nan")
    r = _forward_all(model, x)[-1] - y
    return float(np.mean(np.sum(r * r, axis=1)))


def gauss_newton_terms(model: MlpModel, x, y, chunk_rows: int = 2048):
    """Return (J^T J, J^T r, loss) for residuals r = f(x) - y, each divided by the row count."""
    p_counts = model.layer_param_counts()
    offsets = np.concatenate(([0], np.cumsum(p_counts)))
    n_params = offsets[-1]
    jtj = np.zeros((n_params, n_params))
    jtr = np.zeros(n_params)
    sse = 0.0
    sizes = model.layer_sizes
    n_layers = model.n_layers
    for start in range(0, x.shape[0], chunk_rows):
        xc, yc = x[start : start + chunk_rows], y[start : start + chunk_rows]
        rows = xc.shape[0]
        acts = _forward_all(model, xc)
        res = acts[-1] - yc
        sse += float(np.sum(res * res))
        deltas = backprop_deltas(model, acts)
        aug = [_augment(acts[l]) for l in range(n_layers)]
        for l in range(n_layers):
            e = np.einsum("roi,ro->ri", deltas[l], res)
            jtr[offsets[l] : offsets[l + 1]] += (e.T @ aug[l]).ravel()
            for m in range(l, n_layers):
                n_l, n_m = sizes[l + 1], sizes[m + 1]
                p, q = sizes[l] + 1, sizes[m] + 1
                if l == m == n_layers - 1:
                    # output-layer sensitivities are the identity
                    blk = np.kron(np.eye(n_l), aug[l].T @ aug[l])
                else:
                    g = np.matmul(deltas[l].transpose(0, 2, 1), deltas[m]).reshape(rows, n_l * n_m)
                    k = (aug[l][:, :, None] * aug[m][:, None, :]).reshape(rows, p * q)
                    blk = (g.T @ k).reshape(n_l, n_m, p, q).transpose(0, 2, 1, 3).reshape(n_l * p, n_m * q)
                jtj[offsets[l] : offsets[l + 1], offsets[m] : offsets[m + 1]] += blk
    upper = np.triu_indices(n_params, 1)
    jtj[(upper[1], upper[0])] = jtj[upper]
    n = x.shape[0]
    return jtj / n, jtr / n, sse / n


def _loss_gradient(model: MlpModel, x, y) -> np.ndarray:
    """Gradient of mean_r ||f(x_r) - y_r||^2 by ordinary backprop."""
    acts = _forward_all(model, x)
    delta = 2.0 * (acts[-1] - y) / x.shape[0]
    grads = [None] * model.n_layers
    for l in range(model.n_layers - 1, -1, -1):
        grads[l] = np.hstack((delta.T @ acts[l], delta.sum(axis=0)[:, None])).ravel()
        if l:
            delta = (delta @ model.weights[l]) * (1.0 - acts[l] ** 2)
    return np.concatenate(grads)


def _standardize(model: MlpModel, ds: TapDataset):
    x_tr, y_tr = ds.train
    for name, data in (("in", x_tr), ("out", y_tr)):
        mean = data.mean(axis=0)
        scale = data.std(axis=0)
        scale[scale < 1e-12] = 1.0
        setattr(model, f"{name}_mean", mean)
        setattr(model, f"{name}_scale", scale)


def _normalized(model, pair):
    x, y = pair
    return (x - model.in_mean) / model.in_scale, (y - model.out_mean) / model.out_scale


def train(model: MlpModel, ds: TapDataset, cfg: TrainConfig = TrainConfig(), *, normalize: bool = True):
    """Fit ``model`` (a copy) on ``ds``; returns (best-validation model, report dict)."""
    if model.layer_sizes[0] != ds.n_in or model.layer_sizes[-1] != ds.n_out:
        raise ValueError(
            f"network {model.layer_sizes} does not match dataset layout {ds.n_in}+{ds.n_out}"
        )
    if ds.n_train == 0 or ds.n_val == 0:
        raise ValueError("dataset needs non-empty training and validation splits")
    model = model.copy()
    if normalize:
        _standardize(model, ds)
    x_tr, y_tr = _normalized(model, ds.train)
    x_va, y_va = _normalized(model, ds.validation)

    t_start = time.perf_counter()
    theta = model.get_params()
    loss = _loss(model, x_tr, y_tr)
    if not np.isfinite(loss):
        raise TrainingDiverged(0, loss)
    best_val = _loss(model, x_va, y_va)
    best_theta, best_epoch = theta.copy(), 0
    fails = 0
    lam = cfg.initial_damping
    hist = {"train_loss": [loss], "val_loss": [best_val], "val_failures": [0], "damping": [lam]}
    stop = "max_epochs"
    rng = np.random.default_rng(cfg.seed)
    epochs_run = 0
    for epoch in range(1, cfg.max_epochs + 1):
        if cfg.algorithm == "lm":
            jtj, jtr, loss_now = gauss_newton_terms(model, x_tr, y_tr, cfg.chunk_rows)
            grad_norm = 2.0 * float(np.linalg.norm(jtr))
            if not np.isfinite(loss_now) or not np.isfinite(grad_norm):
                raise TrainingDiverged(epoch, loss_now)
            if grad_norm <= cfg.min_gradient:
                stop = "min_gradient"
                break
            accepted = False
            while not accepted:
                try:
                    factor = scipy.linalg.cho_factor(jtj + lam * np.eye(jtj.shape[0]))
                    step = -scipy.linalg.cho_solve(factor, jtr)
                    model.set_params(theta + step)
                    trial = _loss(model, x_tr, y_tr)
                except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
                    trial = np.inf
                if np.isfinite(trial) and trial < loss_now:
                    theta = theta + step
                    loss = trial
                    lam = max(lam / 10.0, LAMBDA_MIN)
                    accepted = True
                else:
                    lam *= 10.0
                    if lam > LAMBDA_MAX:
                        break
            model.set_params(theta)
            if not accepted:
                stop = "max_damping"
                log.warning("damping exceeded %.0e at epoch %d; stopping", LAMBDA_MAX, epoch)
                break
        else:
            grad_norm = float(np.linalg.norm(_loss_gradient(model, x_tr, y_tr)))
            if grad_norm <= cfg.min_gradient:
                stop = "min_gradient"
                break
            order = rng.permutation(x_tr.shape[0])
            for s in range(0, order.size, cfg.batch_size):
                idx = order[s : s + cfg.batch_size]
                theta = theta - cfg.learning_rate * _loss_gradient(model, x_tr[idx], y_tr[idx])
                model.set_params(theta)
            loss = _loss(model, x_tr, y_tr)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, loss)

        epochs_run = epoch
        val = _loss(model, x_va, y_va)
        if val < best_val:
            best_val, best_theta, best_epoch, fails = val, theta.copy(), epoch, 0
        else:
            fails += 1
        hist["train_loss"].append(loss)
        hist["val_loss"].append(val)
        hist["val_failures"].append(fails)
        hist["damping"].append(lam)
        log.debug("epoch %d loss %.3e val %.3e lambda %.1e", epoch, loss, val, lam)
        if loss <= cfg.target_loss:
            stop = "target_loss"
            break
        if fails >= cfg.max_validation_failures:
            stop = "validation_failures"
            break

    model.set_params(best_theta)
    x_te, y_te = _normalized(model, ds.test)
    report = {
        "epochs": epochs_run,
        "stop_reason": stop,
        "best_epoch": best_epoch,
        "train_loss": _loss(model, x_tr, y_tr),
        "val_loss": best_val,
        "test_loss": _loss(model, x_te, y_te) if ds.n_test else None,
        "seconds": time.perf_counter() - t_start,
        "config": asdict(cfg),
        "history": hist,
    }
    model.report = report
    return model, report
