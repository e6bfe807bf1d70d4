"""Triplet-objective curriculum training on a desk-scale denoiser.

The trainable model is a two-layer tanh network that predicts the noise
added to a latent vector, conditioned on a timestep encoding and an
affordance-conditioning vector. The generated latent is produced
differentiably by single-step reconstruction of the noised positive
exemplar. The training loss is

    L = ||I+ - I_hat||^2 + ||eps - eps_hat||^2 - gamma * ||I- - I_hat||^2

pulling generations toward the pseudo-novel exemplar (and keeping the noise
prediction calibrated) while pushing them away from existing-concept
exemplars. Gradients are computed by hand and verified against central
finite differences.

Everything here is single-threaded and deterministic given the seed.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np

from .errors import DegenerateStep, NonFiniteLoss

LATENT_CLIP = 3.0
_MIN_ALPHA_BAR = 1e-8


# ---------------------------------------------------------------------------
# latents
# ---------------------------------------------------------------------------

def text_latent(text: str, dim: int = 16) -> np.ndarray:
    """Deterministic pseudo-latent for a text handle, values in [-3, 3]."""
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "big")))
    return np.clip(rng.standard_normal(dim), -LATENT_CLIP, LATENT_CLIP)


def condition_vector(terms: Sequence[str], dim: int = 8) -> np.ndarray:
    """Order-insensitive encoding of the positive affordance names."""
    if not terms:
        raise ValueError("terms must be non-empty")
    acc = np.zeros(dim)
    for term in sorted(terms):
        acc += text_latent(f"cond::{term}", dim)
    return acc / len(terms)


class LatentProvider(Protocol):
    def latent(self, ref: str) -> np.ndarray: ...


class HashLatents:
    """Mock-mode provider: latents synthesized from the ref string."""

    def __init__(self, dim: int = 16):
        self.dim = dim

    def latent(self, ref: str) -> np.ndarray:
        return text_latent(ref, self.dim)


class DictLatents:
    """Fixed ref -> latent mapping (tests, precomputed stores)."""

    def __init__(self, mapping: Mapping[str, np.ndarray]):
        self.mapping = {k: np.asarray(v, dtype=np.float64) for k, v in mapping.items()}

    def latent(self, ref: str) -> np.ndarray:
        return self.mapping[ref]


# ---------------------------------------------------------------------------
# noise schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray  # length T, increasing, each in (0, 1)

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=np.float64)
        object.__setattr__(self, "betas", b)
        if b.ndim != 1 or b.size < 1:
            raise ValueError("betas must be a non-empty vector")
        if np.any(b <= 0) or np.any(b >= 1):
            raise ValueError("betas must lie strictly inside (0, 1)")
        if np.any(np.diff(b) < 0):
            raise ValueError("betas must be non-decreasing")
        object.__setattr__(self, "_alpha_bars", np.cumprod(1.0 - b))

    @classmethod
    def linear(cls, t_steps: int = 50, beta_start: float = 1e-4, beta_end: float = 0.05):
        return cls(betas=np.linspace(beta_start, beta_end, t_steps))

    @property
    def T(self) -> int:
        return int(self.betas.size)

    def alpha_bar(self, t: int) -> float:
        if not 1 <= t <= self.T:
            raise ValueError(f"t must be in [1, {self.T}], got {t}")
        return float(self._alpha_bars[t - 1])


def forward_diffuse(x0: np.ndarray, t: int, eps: np.ndarray, s) -> np.ndarray:
    """sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps."""
    ab = s.alpha_bar(t)
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps


def reconstruct(xt: np.ndarray, t: int, eps_hat: np.ndarray, s) -> np.ndarray:
    """Single-step estimate of the clean latent from predicted noise."""
    ab = s.alpha_bar(t)
    if ab < _MIN_ALPHA_BAR:
        raise DegenerateStep(f"alpha_bar at t={t} is {ab}, cannot invert")
    return (xt - math.sqrt(1.0 - ab) * eps_hat) / math.sqrt(ab)


# ---------------------------------------------------------------------------
# toy denoiser
# ---------------------------------------------------------------------------

def time_encoding(t: int, t_steps: int, dim: int = 8) -> np.ndarray:
    """Sinusoidal features of t/T at geometrically spaced frequencies."""
    tau = t / t_steps
    feats = []
    for k in range(dim // 2):
        feats.append(math.sin(tau * math.pi * 2**k))
        feats.append(math.cos(tau * math.pi * 2**k))
    return np.asarray(feats[:dim])


@dataclass
class ToyDenoiser:
    """Two-layer tanh network: concat(x_t, t_enc, cond) -> predicted noise."""

    latent_dim: int = 16
    t_dim: int = 8
    cond_dim: int = 8
    hidden: int = 32
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, latent_dim: int = 16, t_dim: int = 8, cond_dim: int = 8,
             hidden: int = 32, seed: int = 0) -> "ToyDenoiser":
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed])))
        in_dim = latent_dim + t_dim + cond_dim
        params = {
            "w1": rng.standard_normal((hidden, in_dim)) / math.sqrt(in_dim),
            "b1": np.zeros(hidden),
            "w2": rng.standard_normal((latent_dim, hidden)) / math.sqrt(hidden),
            "b2": np.zeros(latent_dim),
        }
        return cls(latent_dim, t_dim, cond_dim, hidden, params)

    @property
    def in_dim(self) -> int:
        return self.latent_dim + self.t_dim + self.cond_dim

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def _input(self, xt: np.ndarray, t: int, t_steps: int, cond: np.ndarray) -> np.ndarray:
        return np.concatenate([xt, time_encoding(t, t_steps, self.t_dim), cond])

    def predict(self, xt: np.ndarray, t: int, t_steps: int, cond: np.ndarray) -> np.ndarray:
        x = self._input(xt, t, t_steps, cond)
        h = np.tanh(self.params["w1"] @ x + self.params["b1"])
        return self.params["w2"] @ h + self.params["b2"]

    def _forward_cached(self, xt, t, t_steps, cond):
        x = self._input(xt, t, t_steps, cond)
        h = np.tanh(self.params["w1"] @ x + self.params["b1"])
        eps_hat = self.params["w2"] @ h + self.params["b2"]
        return x, h, eps_hat

    def backprop(self, x: np.ndarray, h: np.ndarray, d_eps_hat: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients given d(loss)/d(eps_hat)."""
        dw2 = np.outer(d_eps_hat, h)
        db2 = d_eps_hat.copy()
        dh = self.params["w2"].T @ d_eps_hat
        dz = dh * (1.0 - h * h)
        dw1 = np.outer(dz, x)
        db1 = dz
        return {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}

    def flat_params(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in sorted(self.params)])

    def set_flat_params(self, flat: np.ndarray) -> None:
        offset = 0
        for k in sorted(self.params):
            size = self.params[k].size
            self.params[k] = flat[offset : offset + size].reshape(self.params[k].shape).copy()
            offset += size


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

@dataclass
class TripletBatch:
    positive: np.ndarray  # pseudo-novel exemplar latent
    negative: np.ndarray  # existing-concept exemplar latent
    condition: np.ndarray

    def __post_init__(self):
        self.positive = np.asarray(self.positive, dtype=np.float64)
        self.negative = np.asarray(self.negative, dtype=np.float64)
        self.condition = np.asarray(self.condition, dtype=np.float64)
        if self.positive.shape != self.negative.shape:
            raise ValueError("positive and negative latents must share a shape")


def loss_pos(i_plus: np.ndarray, i_hat: np.ndarray, eps: np.ndarray, eps_hat: np.ndarray) -> float:
    """Exemplar-matching term plus the noise-prediction (anti-forgetting) term."""
    return float(np.sum((i_plus - i_hat) ** 2) + np.sum((eps - eps_hat) ** 2))


def loss_neg(i_minus: np.ndarray, i_hat: np.ndarray) -> float:
    return float(np.sum((i_minus - i_hat) ** 2))


def denoise_once(model: ToyDenoiser, s: NoiseSchedule, x0: np.ndarray, t: int,
                 eps: np.ndarray, cond: np.ndarray) -> np.ndarray:
    """Generated latent: noise x0, predict, reconstruct (single step)."""
    xt = forward_diffuse(x0, t, eps, s)
    eps_hat = model.predict(xt, t, s.T, cond)
    return reconstruct(xt, t, eps_hat, s)


def triplet_loss_at(
    batch: TripletBatch, model: ToyDenoiser, s: NoiseSchedule, gamma: float,
    t: int, eps: np.ndarray,
) -> tuple[float, dict]:
    """Triplet loss for a fixed (t, eps) draw, with a per-term trace."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    xt = forward_diffuse(batch.positive, t, eps, s)
    eps_hat = model.predict(xt, t, s.T, batch.condition)
    i_hat = reconstruct(xt, t, eps_hat, s)
    l_pos = loss_pos(batch.positive, i_hat, eps, eps_hat)
    l_neg = loss_neg(batch.negative, i_hat)
    loss = l_pos - gamma * l_neg
    return loss, {"loss": loss, "loss_pos": l_pos, "loss_neg": l_neg, "t": t, "gamma": gamma}


def triplet_loss(
    batch: TripletBatch, model: ToyDenoiser, s: NoiseSchedule, gamma: float,
    rng: np.random.Generator,
) -> tuple[float, dict]:
    """Single-draw estimator: samples (t, eps) from rng, then scores."""
    t = int(rng.integers(1, s.T + 1))
    eps = rng.standard_normal(batch.positive.size)
    return triplet_loss_at(batch, model, s, gamma, t, eps)


def triplet_gradients(
    batch: TripletBatch, model: ToyDenoiser, s: NoiseSchedule, gamma: float,
    t: int, eps: np.ndarray,
) -> tuple[float, dict, dict[str, np.ndarray]]:
    """Loss, trace, and hand-derived parameter gradients at fixed (t, eps)."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    ab = s.alpha_bar(t)
    if ab < _MIN_ALPHA_BAR:
        raise DegenerateStep(f"alpha_bar at t={t} is {ab}, cannot invert")
    xt = forward_diffuse(batch.positive, t, eps, s)
    x, h, eps_hat = model._forward_cached(xt, t, s.T, batch.condition)
    i_hat = reconstruct(xt, t, eps_hat, s)
    l_pos = loss_pos(batch.positive, i_hat, eps, eps_hat)
    l_neg = loss_neg(batch.negative, i_hat)
    loss = l_pos - gamma * l_neg

    # dI_hat/d(eps_hat) is the scalar -sqrt(1-abar)/sqrt(abar)
    k = math.sqrt(1.0 - ab) / math.sqrt(ab)
    d_i_hat = 2.0 * (i_hat - batch.positive) - 2.0 * gamma * (i_hat - batch.negative)
    d_eps_hat = -k * d_i_hat + 2.0 * (eps_hat - eps)
    grads = model.backprop(x, h, d_eps_hat)
    trace = {"loss": loss, "loss_pos": l_pos, "loss_neg": l_neg, "t": t, "gamma": gamma}
    return loss, trace, grads


def grad_check(
    model: ToyDenoiser,
    batch: TripletBatch,
    s: NoiseSchedule,
    gamma: float,
    step_size: float = 1e-5,
    max_checked: int = 1000,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central finite-difference
    gradients over every parameter (a seeded subset above ``max_checked``)."""
    if not 1e-7 <= step_size <= 1e-3:
        raise ValueError("step_size must be in [1e-7, 1e-3]")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed])))
    t = int(rng.integers(1, s.T + 1))
    eps = rng.standard_normal(batch.positive.size)

    _, _, grads = triplet_gradients(batch, model, s, gamma, t, eps)
    analytic = np.concatenate([grads[k2].ravel() for k2 in sorted(grads)])

    flat = model.flat_params()
    n = flat.size
    if n > max_checked:
        idx = rng.choice(n, size=max_checked, replace=False)
    else:
        idx = np.arange(n)

    worst = 0.0
    for i in idx:
        probe = flat.copy()
        probe[i] += step_size
        model.set_flat_params(probe)
        up, _ = triplet_loss_at(batch, model, s, gamma, t, eps)
        probe[i] -= 2.0 * step_size
        model.set_flat_params(probe)
        down, _ = triplet_loss_at(batch, model, s, gamma, t, eps)
        numeric = (up - down) / (2.0 * step_size)
        denom = max(abs(analytic[i]), abs(numeric), 1e-3)
        worst = max(worst, abs(analytic[i] - numeric) / denom)
    model.set_flat_params(flat)
    return worst


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-6  # paper-scale grid default; toy runs override
    gamma: float = 0.5
    epochs_per_stage: int = 20
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.epochs_per_stage < 1:
            raise ValueError("epochs_per_stage must be >= 1")

    def hash(self) -> str:
        payload = json.dumps(self.__dict__, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


LR_GRID = (5e-6, 1e-6, 5e-7)
GAMMA_GRID = (0.0, 0.2, 0.5, 0.8, 1.0)


class AdamW:
    """Adam with decoupled weight decay over the denoiser's parameter dict."""

    def __init__(self, cfg: TrainConfig, params: Mapping[str, np.ndarray]):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.step_count = 0

    def update(self, params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        self.step_count += 1
        b1, b2 = self.cfg.adam_beta1, self.cfg.adam_beta2
        lr, eps, wd = self.cfg.learning_rate, self.cfg.adam_eps, self.cfg.weight_decay
        for k, g in grads.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            m_hat = self.m[k] / (1 - b1**self.step_count)
            v_hat = self.v[k] / (1 - b2**self.step_count)
            params[k] = params[k] - lr * m_hat / (np.sqrt(v_hat) + eps) - lr * wd * params[k]


# ---------------------------------------------------------------------------
# curriculum loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainItem:
    """One training example flattened to what the loop needs."""

    item_id: str
    condition_terms: tuple[str, ...]
    positive_refs: tuple[str, ...]
    negative_refs: tuple[tuple[str, tuple[str, ...]], ...]  # (concept, refs), sorted

    @classmethod
    def build(cls, item_id, condition_terms, positive_refs, negatives: Mapping[str, Sequence[str]]):
        if not positive_refs:
            raise ValueError(f"item {item_id}: no positive refs")
        if not negatives:
            raise ValueError(f"item {item_id}: no negative refs")
        return cls(
            item_id=item_id,
            condition_terms=tuple(condition_terms),
            positive_refs=tuple(positive_refs),
            negative_refs=tuple((k, tuple(v)) for k, v in sorted(negatives.items())),
        )


@dataclass
class StageSet:
    index: int
    items: list[TrainItem]


@dataclass
class Checkpoint:
    stage: int
    params: dict[str, np.ndarray]
    config_hash: str

    def save(self, path) -> None:
        doc = {
            "format": "toy-denoiser-checkpoint-v1",
            "stage": self.stage,
            "config_hash": self.config_hash,
            "params": {k: v.tolist() for k, v in self.params.items()},
        }
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls(
            stage=int(doc["stage"]),
            params={k: np.asarray(v) for k, v in doc["params"].items()},
            config_hash=doc["config_hash"],
        )


@dataclass
class TrainResult:
    checkpoints: list[Checkpoint]
    trace: list[dict]
    model: ToyDenoiser


def train_curriculum(
    stages: Sequence[StageSet],
    cfg: TrainConfig,
    schedule: NoiseSchedule | None = None,
    model: ToyDenoiser | None = None,
    latents: LatentProvider | None = None,
    shuffled: bool = False,
) -> TrainResult:
    """Train stage 1 -> 2 -> 3 sequentially, epochs_per_stage each.

    ``shuffled`` pools every stage's items and trains the same total number
    of steps with no ordering (the no-curriculum ablation); it emits a
    single checkpoint tagged stage 0. Aborts with NonFiniteLoss on inf/nan,
    recording the offending step.
    """
    if not stages or any(not st.items for st in stages):
        raise ValueError("every stage must be non-empty")
    schedule = schedule or NoiseSchedule.linear()
    model = model or ToyDenoiser.init(seed=cfg.seed)
    latents = latents or HashLatents(model.latent_dim)
    optimizer = AdamW(cfg, model.params)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, 7])))

    if shuffled:
        pooled = [item for st in stages for item in st.items]
        plan = [(0, pooled, cfg.epochs_per_stage)]
    else:
        plan = [(st.index, st.items, cfg.epochs_per_stage) for st in stages]

    trace: list[dict] = []
    checkpoints: list[Checkpoint] = []
    step = 0
    for stage_index, items, epochs in plan:
        for epoch in range(epochs):
            order = _shuffled_copy(items, rng)
            for item in order:
                step += 1
                batch = _draw_batch(item, latents, model.cond_dim, rng)
                t = int(rng.integers(1, schedule.T + 1))
                eps = rng.standard_normal(model.latent_dim)
                loss, terms, grads = triplet_gradients(batch, model, schedule, cfg.gamma, t, eps)
                if not math.isfinite(loss):
                    raise NonFiniteLoss(f"non-finite loss at step {step}", step=step)
                optimizer.update(model.params, grads)
                trace.append(
                    {
                        "step": step,
                        "stage": stage_index,
                        "epoch": epoch,
                        "loss": loss,
                        "loss_pos": terms["loss_pos"],
                        "loss_neg": terms["loss_neg"],
                        "gamma": cfg.gamma,
                    }
                )
        checkpoints.append(
            Checkpoint(
                stage=stage_index,
                params={k: v.copy() for k, v in model.params.items()},
                config_hash=cfg.hash(),
            )
        )
    return TrainResult(checkpoints=checkpoints, trace=trace, model=model)


def _shuffled_copy(items: Sequence[TrainItem], rng: np.random.Generator) -> list[TrainItem]:
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        out[i], out[j] = out[j], out[i]
    return out


def _draw_batch(item: TrainItem, latents: LatentProvider, cond_dim: int,
                rng: np.random.Generator) -> TripletBatch:
    pos_ref = item.positive_refs[int(rng.integers(0, len(item.positive_refs)))]
    concept, refs = item.negative_refs[int(rng.integers(0, len(item.negative_refs)))]
    neg_ref = refs[int(rng.integers(0, len(refs)))]
    return TripletBatch(
        positive=latents.latent(pos_ref),
        negative=latents.latent(neg_ref),
        condition=condition_vector(item.condition_terms, cond_dim),
    )


def write_trace_csv(trace: Sequence[dict], path) -> None:
    """Loss trace with the pinned column order."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,stage,epoch,loss,loss_pos,loss_neg,gamma\n")
        for row in trace:
            fh.write(
                f"{row['step']},{row['stage']},{row['epoch']},"
                f"{row['loss']!r},{row['loss_pos']!r},{row['loss_neg']!r},{row['gamma']!r}\n"
            )


def steps_to_threshold(trace: Sequence[dict], threshold: float, window: int = 20) -> int | None:
    """First step whose trailing-window mean loss drops to the threshold."""
    losses = [row["loss"] for row in trace]
    for i in range(window - 1, len(losses)):
        if sum(losses[i - window + 1 : i + 1]) / window <= threshold:
            return trace[i]["step"]
    return None
