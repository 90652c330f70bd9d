"""White-box attacks on :class:`~pertdetect.classifier.MlpModel`.

All attacks are untargeted and work on pixels in [0, 1]. FGSM, BIM and PGD
are L-inf bounded; CW-L2 minimizes squared L2 distortion with a binary search
on the loss weight.
"""

from dataclasses import dataclass

import numpy as np

from .classifier import MlpModel, loss_gradient, predict


@dataclass(frozen=True)
class AttackBudget:
    epsilon: float
    step_size: float
    iterations: int

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0 < self.step_size <= self.epsilon:
            raise ValueError(f"step_size must be in (0, epsilon], got {self.step_size}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")


@dataclass(frozen=True)
class AttackResult:
    adversarial: np.ndarray
    success: bool
    l2_distortion: float
    linf_distortion: float
    clean_label: int
    adv_label: int
    # set when the loss gradient vanished and the image was returned unmodified
    degenerate: bool = False


def _result(model, x, adv, degenerate=False) -> AttackResult:
    clean_label = int(predict(model, x))
    adv_label = int(predict(model, adv))
    d = adv - x
    return AttackResult(adv, clean_label != adv_label, float(np.linalg.norm(d)),
                        float(np.max(np.abs(d))) if d.size else 0.0,
                        clean_label, adv_label, degenerate)


def fgsm(model: MlpModel, x, label: int, epsilon: float) -> AttackResult:
    x = np.asarray(x, dtype=np.float64)
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    g = loss_gradient(model, x, label)
    if not np.any(g):
        return _result(model, x, x.copy(), degenerate=True)
    adv = np.clip(x + epsilon * np.sign(g), 0.0, 1.0)
    return _result(model, x, adv)


def _iterate(model, x, label, budget: AttackBudget, start):
    lo, hi = x - budget.epsilon, x + budget.epsilon
    adv = start
    moved = False
    for _ in range(budget.iterations):
        g = loss_gradient(model, adv, label)
        if np.any(g):
            moved = True
        adv = np.clip(np.clip(adv + budget.step_size * np.sign(g), lo, hi), 0.0, 1.0)
    if not moved:
        return _result(model, x, x.copy(), degenerate=True)
    return _result(model, x, adv)


def bim(model: MlpModel, x, label: int, budget: AttackBudget) -> AttackResult:
    """Iterated FGSM with step ``step_size``, clipped to the eps-ball and [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    return _iterate(model, x, label, budget, x.copy())


def pgd(model: MlpModel, x, label: int, budget: AttackBudget, random_start: bool = True,
        rng: np.random.Generator | None = None) -> AttackResult:
    x = np.asarray(x, dtype=np.float64)
    if not random_start:
        return bim(model, x, label, budget)
    if rng is None:
        raise ValueError("pgd with random_start needs an rng")
    eps = budget.epsilon
    start = np.clip(x + rng.uniform(-eps, eps, size=x.shape), 0.0, 1.0)
    return _iterate(model, x, label, budget, start)


@dataclass(frozen=True)
class CwConfig:
    c_min: float = 1e-2
    c_max: float = 1e3
    rounds: int = 6
    iterations: int = 100
    learning_rate: float = 5e-2
    kappa: float = 0.0


def _margin(z, label):
    others = np.delete(z, label)
    j = int(np.argmax(others))
    j = j if j < label else j + 1
    return z[label] - z[j], j


def cw_l2(model: MlpModel, x, label: int, cfg: CwConfig = CwConfig()) -> AttackResult:
    """Carlini-Wagner L2 (untargeted) with tanh box constraint and Adam.

    Minimizes ||x' - x||^2 + c * max(z_label - max_{i != label} z_i + kappa, 0)
    and binary-searches c, starting from ``c_min``. Returns the smallest-L2
    successful iterate over all rounds, or the clean image with success False.
    """
    x = np.asarray(x, dtype=np.float64)
    if not 0 < cfg.c_min <= cfg.c_max:
        raise ValueError(f"need 0 < c_min <= c_max, got [{cfg.c_min}, {cfg.c_max}]")
    if cfg.rounds < 1:
        raise ValueError("rounds must be >= 1")
    K = model.n_classes
    clean_label = int(predict(model, x))
    w0 = np.arctanh(np.clip(2 * x - 1, -1 + 1e-6, 1 - 1e-6))

    best, best_l2 = None, np.inf
    lower, upper = 0.0, np.inf
    c = cfg.c_min
    b1, b2, eps = 0.9, 0.999, 1e-8
    for _ in range(cfg.rounds):
        w = w0.copy()
        m = np.zeros_like(w)
        v = np.zeros_like(w)
        round_success = False
        for it in range(1, cfg.iterations + 1):
            xp = (np.tanh(w) + 1) / 2
            z = model.logits(xp[None, :])[0]
            margin, j = _margin(z, label)
            grad_x = 2 * (xp - x)
            if margin + cfg.kappa > 0:
                dz = np.zeros(K)
                dz[label], dz[j] = c, -c
                grad_x = grad_x + model.backprop_input(xp[None, :], dz[None, :])[0]
            g = grad_x * (1 - np.tanh(w) ** 2) / 2
            if not np.all(np.isfinite(g)):
                round_success = False
                break
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            w = w - cfg.learning_rate * (m / (1 - b1**it)) / (np.sqrt(v / (1 - b2**it)) + eps)
            xp = (np.tanh(w) + 1) / 2
            if int(predict(model, xp)) != clean_label:
                round_success = True
                l2 = float(np.linalg.norm(xp - x))
                if l2 < best_l2:
                    best, best_l2 = xp.copy(), l2
        if round_success:
            upper = min(upper, c)
            if c <= cfg.c_min:
                break
            c = (lower + upper) / 2
        else:
            lower = max(lower, c)
            c = min(c * 10, cfg.c_max) if not np.isfinite(upper) else (lower + upper) / 2
        if lower >= cfg.c_max:
            break
    if best is None:
        return _result(model, x, x.copy())
    return _result(model, x, best)


ATTACKS = ("fgsm", "bim", "pgd", "cw_l2")


def run_attack(name: str, model: MlpModel, x, label: int, epsilon: float = 0.1,
               step_size: float | None = None, iterations: int = 10,
               rng: np.random.Generator | None = None, cw: CwConfig = CwConfig()) -> AttackResult:
    if name == "fgsm":
        return fgsm(model, x, label, epsilon)
    step = step_size if step_size is not None else epsilon / 4
    if name == "bim":
        return bim(model, x, label, AttackBudget(epsilon, step, iterations))
    if name == "pgd":
        return pgd(model, x, label, AttackBudget(epsilon, step, iterations), True, rng)
    if name == "cw_l2":
        return cw_l2(model, x, label, cw)
    raise ValueError(f"unknown attack {name!r}; choose from {ATTACKS}")


@dataclass
class Corpus:
    """Attack outputs for the correctly classified images of a clean set."""

    attack: str
    epsilon: float
    source_index: np.ndarray
    images: np.ndarray
    results: list

    @property
    def success(self) -> np.ndarray:
        return np.array([r.success for r in self.results], dtype=bool)

    def successful(self) -> np.ndarray:
        return self.images[self.success]


def craft_corpus(model: MlpModel, X, y, attack: str, epsilon: float = 0.1,
                 step_size: float | None = None, iterations: int = 10, seed: int = 0,
                 cw: CwConfig = CwConfig()) -> Corpus:
    """Attack every correctly classified image; misclassified cleans are skipped."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    correct = np.flatnonzero(predict(model, X) == y)
    seeds = np.random.SeedSequence(seed).spawn(len(X))
    results = []
    for i in correct:
        rng = np.random.default_rng(seeds[i])
        results.append(run_attack(attack, model, X[i], int(y[i]), epsilon, step_size,
                                  iterations, rng, cw))
    images = np.array([r.adversarial for r in results]).reshape(len(results), X.shape[1])
    return Corpus(attack, epsilon, correct, images, results)
