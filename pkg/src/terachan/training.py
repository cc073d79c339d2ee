"""Conditional WGAN-GP training loop.

Each iteration runs one discriminator update; after every
``d_steps_per_g_step`` of those, one generator update follows. The
discriminator maximizes mean D(real|c) + mean(1 - D(fake|c)) minus the
Lipschitz penalty (implemented as Adam on the negation); the generator
minimizes mean(1 - D(G(z|c)|c)) with plain SGD. ``critic_mode="wgan"``
switches both to the canonical unclamped critic objective and drops the
discriminator's output sigmoid.

Determinism: one master seed feeds independent named streams (init,
shuffling, noise, interpolation, condition resampling); their states are
checkpointed, so resuming replays an uninterrupted run bit for bit.
"""

from __future__ import annotations

import gc
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import checkpoint as ckpt_io
from .autodiff import (
    Graph,
    Tensor,
    add_const,
    mean,
    narrow,
    neg,
    norm_l2,
    scale,
    square,
    sub,
    tsum,
)
from .channel import denormalize, normalize_batch
from .metrics import angular_spread, delay_spread
from .model import (
    EncoderConfig,
    arrays_to_params,
    discriminator_forward,
    generator_forward,
    init_discriminator_params,
    init_generator_params,
    params_to_arrays,
)
from .optim import Adam, Sgd, zero_grads
from .rng import restore, state_of, stream
from .synthetic import Dataset

DIVERGENCE_LIMIT = 1e6

# stream ids under the master seed
_INIT_G, _INIT_D, _SHUFFLE, _NOISE, _EPS, _COND, _EVAL = 10, 11, 12, 13, 14, 15, 16

CRITIC_MODES = ("paper", "wgan")
CONDITION_PAIRINGS = ("resample", "paired")


class DivergenceError(RuntimeError):
    """Training objective left the finite/bounded regime."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    batch_size: int = 64
    gp_lambda: float = 10.0
    d_steps_per_g_step: int = 3
    g_learning_rate: float = 1e-4
    d_learning_rate: float = 1e-4
    seed: int = 1
    checkpoint_interval: int = 100      # epochs between checkpoint files
    eval_interval: int = 50             # epochs between spread-delta evaluations
    critic_mode: str = "paper"
    condition_pairing: str = "resample"

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.d_steps_per_g_step < 1:
            raise ValueError("epochs, batch_size and d_steps_per_g_step must be positive")
        if self.gp_lambda < 0:
            raise ValueError("gp_lambda must be >= 0")
        if self.critic_mode not in CRITIC_MODES:
            raise ValueError(f"critic_mode must be one of {CRITIC_MODES}")
        if self.condition_pairing not in CONDITION_PAIRINGS:
            raise ValueError(f"condition_pairing must be one of {CONDITION_PAIRINGS}")


LOG_COLUMNS = (
    "iteration", "epoch", "d_loss", "g_loss", "penalty",
    "d_grad_norm", "g_grad_norm", "elapsed_s",
    "delay_spread_delta", "angle_spread_delta",
)


@dataclass
class TrainLog:
    """Append-only per-iteration telemetry; eval columns filled when run."""

    rows: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self._t0 = time.monotonic()

    def append(self, **kw) -> dict:
        row = {col: kw.get(col, "") for col in LOG_COLUMNS}
        row["elapsed_s"] = time.monotonic() - self._t0
        if self.rows and row["elapsed_s"] < self.rows[-1]["elapsed_s"]:
            row["elapsed_s"] = self.rows[-1]["elapsed_s"]
        self.rows.append(row)
        return row

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(LOG_COLUMNS) + "\n")
            for row in self.rows:
                fh.write(",".join(str(row[c]) for c in LOG_COLUMNS) + "\n")


def gradient_penalty(x_real: np.ndarray, x_fake: np.ndarray, cond: np.ndarray,
                     disc_fn, rng, graph: Graph, eps: np.ndarray | None = None) -> Tensor:
    """Mean squared deviation of the interpolate gradient norm from 1.

    ``disc_fn(x, c)`` maps tensors to a per-sample score column. The result
    stays differentiable w.r.t. the discriminator parameters (second-order
    path through the recorded backward pass).
    """
    n = x_real.shape[0]
    if x_fake.shape != x_real.shape or cond.shape[0] != n:
        raise ValueError(f"penalty batch shapes differ: {x_real.shape}, {x_fake.shape}, {cond.shape}")
    if eps is None:
        eps = rng.uniform(0.0, 1.0, size=(n, 1))
    with graph:
        x_mix = Tensor(eps * x_real + (1.0 - eps) * x_fake, requires_grad=True)
        scores = disc_fn(x_mix, Tensor(cond))
        grad_x = graph.input_gradient(tsum(scores), x_mix)
        norms = norm_l2(grad_x, axis=1)
        return mean(square(add_const(norms, -1.0)))


def discriminator_loss(disc_fn, x_real, c_real, x_fake, c_fake, gp_lambda, rng,
                       graph: Graph, critic_mode: str = "paper",
                       eps: np.ndarray | None = None):
    """Build the discriminator's minimization target on ``graph``.

    Returns (loss tensor, parts dict). The fake batch is treated as a
    constant: no gradient flows into whatever produced it.
    """
    n = x_real.shape[0]
    with graph:
        # one double-width forward scores reals and fakes together
        scores = disc_fn(
            Tensor(np.concatenate([x_real, x_fake], axis=0)),
            Tensor(np.concatenate([c_real, c_fake], axis=0)),
        )
        mean_real = mean(narrow(scores, 0, 0, n))
        mean_fake = mean(narrow(scores, 0, n, n))
        if critic_mode == "paper":
            # mean D(real) + mean(1 - D(fake))
            objective = add_const(sub(mean_real, mean_fake), 1.0)
        else:
            objective = sub(mean_real, mean_fake)
    penalty_value = 0.0
    if gp_lambda > 0:
        penalty = gradient_penalty(x_real, x_fake, c_real, disc_fn, rng, graph, eps=eps)
        penalty_value = penalty.item()
        with graph:
            objective = sub(objective, scale(penalty, gp_lambda))
    with graph:
        loss = neg(objective)
    parts = {
        "objective": objective.item(),
        "penalty": penalty_value,
        "mean_real": mean_real.item(),
        "mean_fake": mean_fake.item(),
    }
    return loss, parts


def generator_loss(d_fake_scores: Tensor, critic_mode: str = "paper") -> Tensor:
    """mean(1 - D(fake)) in paper mode, -mean(D(fake)) in wgan mode."""
    if critic_mode == "paper":
        return mean(add_const(neg(d_fake_scores), 1.0))
    return neg(mean(d_fake_scores))


def _grad_norm(params: dict[str, Tensor]) -> float:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    return float(np.sqrt(total))


class Trainer:
    """Owns parameters, optimizers, RNG streams and the telemetry log."""

    def __init__(self, dataset: Dataset, encoder_cfg: EncoderConfig, train_cfg: TrainConfig):
        self.dataset = dataset
        self.encoder_cfg = encoder_cfg
        self.train_cfg = train_cfg
        self.scaler = dataset.scaler
        self.x_train, self.c_train = normalize_batch(dataset.train, dataset.scaler)

        seed = train_cfg.seed
        self.gen_params = init_generator_params(encoder_cfg, stream(seed, _INIT_G))
        self.disc_params = init_discriminator_params(encoder_cfg, stream(seed, _INIT_D))
        self.opt_g = Sgd(train_cfg.g_learning_rate)
        self.opt_d = Adam(train_cfg.d_learning_rate)
        self.rng_shuffle = stream(seed, _SHUFFLE)
        self.rng_noise = stream(seed, _NOISE)
        self.rng_eps = stream(seed, _EPS)
        self.rng_cond = stream(seed, _COND)
        self.epoch = 0
        self.iteration = 0
        self.log = TrainLog()
        self._last_g_loss: float | None = None
        self._last_g_grad_norm: float | None = None

    @classmethod
    def from_checkpoint(cls, dataset: Dataset, ckpt: ckpt_io.Checkpoint,
                        train_cfg: TrainConfig | None = None) -> "Trainer":
        if train_cfg is None:
            train_cfg = TrainConfig(**ckpt.metadata["train_config"])
        trainer = cls(dataset, ckpt.encoder_config, train_cfg)
        trainer.gen_params = arrays_to_params(ckpt.gen_params)
        trainer.disc_params = arrays_to_params(ckpt.disc_params)
        trainer.opt_g.load_state_dict(ckpt.opt_gen)
        trainer.opt_d.load_state_dict(ckpt.opt_disc)
        trainer.opt_d.load_moment_arrays(ckpt.opt_disc_arrays)
        for name, state in ckpt.metadata["rng"].items():
            restore(getattr(trainer, f"rng_{name}"), state)
        trainer.epoch = int(ckpt.metadata["epoch"])
        trainer.iteration = int(ckpt.metadata["iteration"])
        return trainer

    # forward helpers -------------------------------------------------------

    def _disc_fn(self, x: Tensor, c: Tensor) -> Tensor:
        return discriminator_forward(
            x, c, self.disc_params, self.encoder_cfg,
            sigmoid_output=self.train_cfg.critic_mode == "paper",
        )

    def _generate(self, z: np.ndarray, cond: np.ndarray) -> np.ndarray:
        """Run the generator outside any graph (treated as constants)."""
        return generator_forward(Tensor(z), Tensor(cond), self.gen_params, self.encoder_cfg).data

    def _resample_conditions(self, n: int) -> np.ndarray:
        idx = self.rng_cond.integers(0, self.c_train.shape[0], size=n)
        return self.c_train[idx]

    # update steps ----------------------------------------------------------

    def discriminator_step(self, x_real: np.ndarray, c_real: np.ndarray) -> dict:
        cfg = self.train_cfg
        n = x_real.shape[0]
        z = self.rng_noise.standard_normal((n, self.encoder_cfg.noise_dim))
        c_fake = c_real if cfg.condition_pairing == "paired" else self._resample_conditions(n)
        x_fake = self._generate(z, c_fake)

        graph = Graph()
        try:
            loss, parts = discriminator_loss(
                self._disc_fn, x_real, c_real, x_fake, c_fake,
                cfg.gp_lambda, self.rng_eps, graph, cfg.critic_mode,
            )
            zero_grads(self.disc_params)
            graph.backward(loss)
        finally:
            graph.release()
        parts["d_grad_norm"] = _grad_norm(self.disc_params)
        self._check_finite(parts["objective"], parts)
        self.opt_d.step(self.disc_params)
        parts["d_loss"] = -parts["objective"]
        return parts

    def generator_step(self) -> dict:
        cfg = self.train_cfg
        n = cfg.batch_size
        z = self.rng_noise.standard_normal((n, self.encoder_cfg.noise_dim))
        cond = self._resample_conditions(n)

        for p in self.disc_params.values():
            p.requires_grad = False
        graph = Graph()
        try:
            with graph:
                fake = generator_forward(Tensor(z), Tensor(cond), self.gen_params, self.encoder_cfg)
                scores = self._disc_fn(fake, Tensor(cond))
                loss = generator_loss(scores, cfg.critic_mode)
            zero_grads(self.gen_params)
            graph.backward(loss)
            value = loss.item()
        finally:
            graph.release()
            for p in self.disc_params.values():
                p.requires_grad = True

        g_grad_norm = _grad_norm(self.gen_params)
        self._check_finite(value, {"g_loss": value, "g_grad_norm": g_grad_norm})
        self.opt_g.step(self.gen_params)
        return {"g_loss": value, "g_grad_norm": g_grad_norm}

    def _check_finite(self, value: float, diagnostics: dict) -> None:
        if not np.isfinite(value) or abs(value) > DIVERGENCE_LIMIT:
            raise DivergenceError(f"objective {value} out of bounds; last step: {diagnostics}")

    # epoch loop -------------------------------------------------------------

    def run_epoch(self) -> None:
        cfg = self.train_cfg
        n = self.x_train.shape[0]
        perm = self.rng_shuffle.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            parts = self.discriminator_step(self.x_train[idx], self.c_train[idx])
            self.iteration += 1
            if self.iteration % cfg.d_steps_per_g_step == 0:
                g_parts = self.generator_step()
                self._last_g_loss = g_parts["g_loss"]
                self._last_g_grad_norm = g_parts["g_grad_norm"]
            self.log.append(
                iteration=self.iteration,
                epoch=self.epoch + 1,
                d_loss=parts["d_loss"],
                g_loss="" if self._last_g_loss is None else self._last_g_loss,
                penalty=parts["penalty"],
                d_grad_norm=parts["d_grad_norm"],
                g_grad_norm="" if self._last_g_grad_norm is None else self._last_g_grad_norm,
            )
        self.epoch += 1

    def evaluate(self) -> dict:
        """Relative spread gaps of generated samples against the test split."""
        test = self.dataset.test
        conds = np.array([[self.scaler.to01("distance", s.distance)] for s in test])
        rng = stream(self.train_cfg.seed, _EVAL, self.epoch)
        z = rng.standard_normal((len(test), self.encoder_cfg.noise_dim))
        vecs = self._generate(z, conds)
        generated = [denormalize(vecs[i], float(conds[i, 0]), self.scaler) for i in range(len(test))]

        real_ds = np.mean([delay_spread(s) for s in test])
        real_as = np.mean([angular_spread(s) for s in test])
        gen_ds = np.mean([delay_spread(s) for s in generated])
        gen_as = np.mean([angular_spread(s) for s in generated])
        return {
            "delay_spread_delta": abs(gen_ds - real_ds) / real_ds,
            "angle_spread_delta": abs(gen_as - real_as) / real_as,
        }

    # persistence ------------------------------------------------------------

    def checkpoint(self) -> ckpt_io.Checkpoint:
        return ckpt_io.Checkpoint(
            encoder_config=self.encoder_cfg,
            gen_params=params_to_arrays(self.gen_params),
            disc_params=params_to_arrays(self.disc_params),
            opt_gen=self.opt_g.state_dict(),
            opt_disc=self.opt_d.state_dict(),
            opt_gen_arrays=self.opt_g.moment_arrays(),
            opt_disc_arrays=self.opt_d.moment_arrays(),
            scaler=self.scaler,
            metadata={
                "epoch": self.epoch,
                "iteration": self.iteration,
                "seed": self.train_cfg.seed,
                "train_config": asdict(self.train_cfg),
                "rng": {
                    "shuffle": state_of(self.rng_shuffle),
                    "noise": state_of(self.rng_noise),
                    "eps": state_of(self.rng_eps),
                    "cond": state_of(self.rng_cond),
                },
            },
        )

    def run(self, out_dir=None, progress=None) -> ckpt_io.Checkpoint:
        """Train to ``train_cfg.epochs``, checkpointing and evaluating on schedule.

        The cycle collector is suspended for the duration: released graphs
        free by refcount, and generational scans otherwise dominate the step
        time at this allocation rate.
        """
        cfg = self.train_cfg
        gc_was_enabled = gc.isenabled()
        gc.disable()
        try:
            # BLAS thread sync dominates the many small GEMMs of this model
            with threadpool_limits(limits=1):
                self._run_epochs(out_dir, progress)
        finally:
            if gc_was_enabled:
                gc.enable()
        final = self.checkpoint()
        if out_dir is not None:
            ckpt_io.save(f"{out_dir}/checkpoint_final.bin", final)
            self.log.write_csv(f"{out_dir}/trainlog.csv")
        return final

    def _run_epochs(self, out_dir, progress) -> None:
        cfg = self.train_cfg
        while self.epoch < cfg.epochs:
            self.run_epoch()
            if cfg.eval_interval and self.epoch % cfg.eval_interval == 0 and self.log.rows:
                deltas = self.evaluate()
                self.log.rows[-1].update(deltas)
                if progress:
                    progress(self.epoch, deltas)
            elif progress:
                progress(self.epoch, None)
            if out_dir is not None and cfg.checkpoint_interval \
                    and self.epoch % cfg.checkpoint_interval == 0 and self.epoch < cfg.epochs:
                ckpt_io.save(f"{out_dir}/checkpoint_{self.epoch:05d}.bin", self.checkpoint())
            if self.epoch % 10 == 0:
                gc.collect()


def train(dataset: Dataset, encoder_cfg: EncoderConfig, train_cfg: TrainConfig,
          out_dir=None, progress=None) -> tuple[ckpt_io.Checkpoint, TrainLog]:
    trainer = Trainer(dataset, encoder_cfg, train_cfg)
    final = trainer.run(out_dir=out_dir, progress=progress)
    return final, trainer.log
