"""Attack losses, the projected perturbation optimizer and the midpoint sweep.

Every loss is *minimized* over the perturbation ``r``:

========  ==================================================================
pgd       ``-CE(onehot(label), softmax(f(x + r)))``
swap      ``KL(P || softmax(f(x + r)))``, ``P`` = swapped top-2 of ``f(x)``
swap_l2   swap ``+ a3 * ||r||^2``
cos       swap ``+ a2 * log10(cos(x, x + r) + 1)`` with ``a2 <= 0``
fft       swap ``+ a1 * low_freq_energy(r, k_f)``
wcs       swap ``+ a * weighted_corr_sim(x, x + r, k)``
========  ==================================================================

pgd takes sign-gradient steps. The swap family steps along the raw gradient
rescaled so its largest component has magnitude ``alpha``, which keeps the
gradient's shape (and any spectral shaping from a regularizer). Both project back onto the L-infinity ball of radius ``eps`` after every
step and stop at the first iteration that flips the predicted label.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import math
from typing import Optional

import numpy as np

from . import correlation, spectral
from .errors import ConfigError, DegenerateInputError, DomainError, ShapeError
from .metrics import asr, eligible_indices
from .models import forward, input_gradient, log_softmax, predict_proba, softmax
from .seeding import sample_seed

METHODS = ("pgd", "swap", "swap_l2", "cos", "fft", "wcs")
SWAP_FAMILY = ("swap", "swap_l2", "cos", "fft", "wcs")

# parameters each method uses; everything else must stay unset
RELEVANT = {
    "pgd": (),
    "swap": (),
    "swap_l2": ("a3",),
    "cos": ("a2",),
    "fft": ("a1", "k_f"),
    "wcs": ("a", "k"),
}
DEFAULTS = {"a1": 1.0, "a2": -1.0, "a3": 0.1, "a": -1.0, "k": 4.0, "k_f": None}


def swap_target(p):
    """Exchange the largest and second-largest entries of ``p``.

    Ties go to the lowest index, for both the top-1 and the runner-up.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or len(p) < 2:
        raise DomainError("swap_target needs at least 2 classes")
    top = int(np.argmax(p))
    rest = p.copy()
    rest[top] = -np.inf
    second = int(np.argmax(rest))
    out = p.copy()
    out[top], out[second] = p[second], p[top]
    return out


@dataclass(frozen=True)
class LossSpec:
    method: str
    a1: Optional[float] = None
    a2: Optional[float] = None
    a3: Optional[float] = None
    a: Optional[float] = None
    k: Optional[float] = None
    k_f: Optional[float] = None
    target: Optional[tuple] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown attack method {self.method!r}; choose from {METHODS}")
        relevant = RELEVANT[self.method]
        for name in ("a1", "a2", "a3", "a", "k", "k_f"):
            value = getattr(self, name)
            if name not in relevant and value is not None:
                raise ConfigError(f"parameter {name} is not used by method {self.method}")
            if value is not None and not math.isfinite(value):
                raise ConfigError(f"parameter {name} must be finite")
        if self.a1 is not None and self.a1 < 0:
            raise ConfigError("a1 must be >= 0")
        if self.a2 is not None and self.a2 > 0:
            raise ConfigError("a2 must be <= 0")
        if self.a3 is not None and self.a3 < 0:
            raise ConfigError("a3 must be >= 0")
        if self.target is not None:
            if self.method not in SWAP_FAMILY:
                raise ConfigError("a target distribution is only used by the swap family")
            t = np.asarray(self.target, dtype=np.float64)
            if np.any(t < 0) or abs(t.sum() - 1.0) > 1e-12:
                raise ConfigError("target must be a probability vector")
            object.__setattr__(self, "target", tuple(float(v) for v in t))

    @classmethod
    def with_defaults(cls, method, **overrides):
        if method not in METHODS:
            raise ConfigError(f"unknown attack method {method!r}; choose from {METHODS}")
        values = {name: DEFAULTS[name] for name in RELEVANT[method]}
        values.update(overrides)
        return cls(method, **values)

    def resolved(self, n):
        """Fill length-dependent defaults (``k_f = N / 8``)."""
        if self.method == "fft" and self.k_f is None:
            return replace(self, k_f=n / 8.0)
        return self


@dataclass(frozen=True)
class AttackSpec:
    loss: LossSpec
    eps: float = 0.1
    alpha: Optional[float] = None  # None -> eps / 10
    budget: int = 100
    seed: int = 0

    def __post_init__(self):
        if not (self.eps >= 0 and math.isfinite(self.eps)):
            raise ConfigError("eps must be finite and >= 0")
        if self.alpha is not None and not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ConfigError("alpha must be finite and > 0")
        if self.budget < 1:
            raise ConfigError("budget must be >= 1")

    @property
    def step(self):
        return self.alpha if self.alpha is not None else self.eps / 10.0


@dataclass
class AttackResult:
    r: np.ndarray
    success: bool
    l2_distance: float
    iterations_used: int
    original_label: int
    adversarial_label: int
    index: int = 0
    true_label: Optional[int] = None
    seed: int = 0

    @property
    def linf(self):
        return float(np.max(np.abs(self.r))) if len(self.r) else 0.0


def _values(x):
    return np.asarray(getattr(x, "values", x), dtype=np.float64)


def _pgd_logit_loss(label):
    def loss(z):
        logp = log_softmax(z)
        grad = -softmax(z)
        grad[label] += 1.0
        return float(logp[label]), grad

    return loss


def _kl_logit_loss(target):
    P = np.asarray(target, dtype=np.float64)
    support = P > 0
    entropy_term = float(np.sum(P[support] * np.log(P[support])))

    def loss(z):
        logq = log_softmax(z)
        return entropy_term - float(np.sum(P[support] * logq[support])), softmax(z) - P

    return loss


def _cos_regularizer(x, y):
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise DegenerateInputError("cosine similarity undefined for a zero-norm vector")
    c = float(np.dot(x, y) / (nx * ny))
    if c + 1.0 <= 0.0:
        raise DegenerateInputError("cosine similarity of -1 makes log10(c + 1) undefined")
    dc = x / (nx * ny) - c * y / (ny * ny)
    return math.log10(c + 1.0), dc / ((c + 1.0) * math.log(10.0))


def _logit_loss_for(m, x, spec, label):
    if spec.method == "pgd":
        if label is None:
            label = int(np.argmax(forward(m, x)))
        return _pgd_logit_loss(label)
    target = spec.target
    if target is None:
        target = swap_target(predict_proba(m, x))
    return _kl_logit_loss(target)


def _add_regularizer(value, grad, x, r, spec):
    if spec.method == "swap_l2":
        value += spec.a3 * float(np.dot(r, r))
        grad = grad + 2.0 * spec.a3 * r
    elif spec.method == "cos":
        reg, dreg = _cos_regularizer(x, x + r)
        value += spec.a2 * reg
        grad = grad + spec.a2 * dreg
    elif spec.method == "fft":
        value += spec.a1 * spectral.low_freq_energy(r, spec.k_f)
        grad = grad + spec.a1 * spectral.low_freq_energy_grad(r, spec.k_f)
    elif spec.method == "wcs":
        value += spec.a * correlation.weighted_corr_sim(x, x + r, spec.k)
        grad = grad + spec.a * correlation.weighted_corr_sim_grad_y(x, x + r, spec.k)
    return float(value), grad


def attack_loss(m, x, r, spec, label=None):
    """Scalar attack loss at ``x + r`` and its exact gradient with respect to ``r``."""
    x = _values(x)
    r = np.asarray(r, dtype=np.float64)
    if x.shape != r.shape or len(x) != m.n:
        raise ShapeError(f"x {x.shape}, r {r.shape} and model length {m.n} disagree")
    spec = spec.resolved(len(x))
    value, grad = input_gradient(m, x + r, _logit_loss_for(m, x, spec, label))
    return _add_regularizer(value, grad, x, r, spec)


def _unit_linf(g):
    scale = np.max(np.abs(g))
    return g / scale if scale > 0 else g


def run_attack(m, x, spec, label=None, index=0):
    """Optimize a perturbation for one series; returns an :class:`AttackResult`."""
    values = _values(x)
    if values.ndim != 1 or len(values) != m.n:
        raise ShapeError(f"model expects length {m.n}, got shape {values.shape}")
    if label is None:
        label = getattr(x, "label", None)
    logits = forward(m, values)
    original = int(np.argmax(logits))
    loss_label = original if label is None else int(label)
    loss = spec.loss.resolved(m.n)
    if loss.method in SWAP_FAMILY and loss.target is None:
        loss = replace(loss, target=tuple(swap_target(softmax(logits))))
    eps, step = spec.eps, spec.step
    logit_loss = _logit_loss_for(m, values, loss, loss_label)
    r = np.zeros(m.n)
    adversarial = original
    used = 0
    if eps > 0:
        # the forward pass that checks success at r doubles as the next gradient's forward
        z, cache = m.logits_batch(values[None, :], with_cache=True)
        for used in range(1, spec.budget + 1):
            value, dz = logit_loss(z[0])
            _, dX = m.backward(cache, np.asarray(dz)[None, :])
            _, g = _add_regularizer(value, dX[0], values, r, loss)
            direction = np.sign(g) if loss.method == "pgd" else _unit_linf(g)
            r = np.clip(r - step * direction, -eps, eps)
            z, cache = m.logits_batch((values + r)[None, :], with_cache=True)
            adversarial = int(np.argmax(z[0]))
            if adversarial != original:
                break
    return AttackResult(
        r=r,
        success=adversarial != original,
        l2_distance=float(np.linalg.norm(r)),
        iterations_used=used,
        original_label=original,
        adversarial_label=adversarial,
        index=index,
        true_label=label,
        seed=sample_seed(spec.seed, index),
    )


def attack_eligible(m, series, spec, workers=1):
    """Attack every correctly classified series; returns ``(results, eligible_count)``.

    Results are ordered by test index whatever the worker count.
    """
    idx = eligible_indices(m, series)

    def one(i):
        return run_attack(m, series[i], spec, index=i)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, idx))
    else:
        results = [one(i) for i in idx]
    return results, len(idx)


def midpoint_grid(n, num_points):
    if num_points < 2:
        raise DomainError("midpoint sweep needs at least 2 points")
    return np.geomspace(1.0, n / 2.0, num_points)


def midpoint_sweep(m, data, base_spec, num_points=10, seed=None, workers=1):
    """ASR of the wcs attack at log-spaced midpoints ``k`` in ``[1, N/2]``.

    Returns a list of ``(k, asr)`` ordered by ``k``.
    """
    if base_spec.loss.method != "wcs":
        raise ConfigError("midpoint sweep requires a wcs attack spec")
    if seed is not None:
        base_spec = replace(base_spec, seed=seed)
    out = []
    for k in midpoint_grid(data.series_length, num_points):
        spec = replace(base_spec, loss=replace(base_spec.loss, k=float(k)))
        results, _ = attack_eligible(m, data.test, spec, workers)
        out.append((float(k), asr(results)))
    return out
