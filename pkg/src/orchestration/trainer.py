"""Minibatch diffusion training with early stopping.

Every stage (global, region, device) runs the same loop. Only the
per-example loss and the set of trainable tensors differ.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from ..diffusion import NoiseSchedule, forward_diffuse, sample_step
from ..errors import NonFiniteError, StageError
from ..numerics import Matrix, Node, Rng, Tape, backward, ops
from .optim import make_optimizer
from .train_config import TrainConfig

logger = logging.getLogger(__name__)

ExampleLoss = Callable[[Tape, dict[str, Node], Any, Rng, bool], Node]
"""(tape, nodes, example, rng, training) -> 1 x 1 loss node."""


@dataclass
class TrainResult:
    params: dict[str, Matrix]
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0


def noised_target(tape: Tape, x0: Node, schedule: NoiseSchedule, rng: Rng) -> tuple[Node, int]:
    """Draw ``t`` and build ``x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps`` on the tape."""
    t = sample_step(rng, schedule.T)
    noise, _ = forward_diffuse(np.zeros(x0.shape, dtype=tape.dtype), t, schedule, rng)
    return ops.add(ops.scale(x0, float(math.sqrt(schedule.alpha_bar[t]))), tape.constant(noise)), t


def _bind(tape: Tape, params: dict[str, Matrix], frozen: dict[str, Matrix], trainable: bool) -> dict[str, Node]:
    nodes = {name: tape.leaf(value, name) for name, value in frozen.items()}
    nodes.update({name: tape.leaf(value, name, requires_grad=trainable) for name, value in params.items()})
    return nodes


def evaluate_loss(
    example_loss: ExampleLoss,
    params: dict[str, Matrix],
    frozen: dict[str, Matrix],
    examples: Sequence[Any],
    rng: Rng,
    dtype,
) -> float:
    """Mean loss without recording, dropout off."""
    tape = Tape(recording=False, dtype=dtype)
    nodes = _bind(tape, params, frozen, trainable=False)
    total = sum(float(example_loss(tape, nodes, ex, rng, False).value[0, 0]) for ex in examples)
    return total / len(examples)


def train_loop(
    stage: str,
    job_id: str,
    tensors: dict[str, Matrix],
    trainable: Sequence[str],
    example_loss: ExampleLoss,
    train_examples: Sequence[Any],
    val_examples: Sequence[Any],
    cfg: TrainConfig,
    rng: Rng,
    run_log: Optional[Any] = None,
    report: Any = None,
) -> TrainResult:
    """Train ``trainable`` entries of ``tensors`` on copies; the inputs are not modified.

    Validation uses the same derived noise every epoch, so losses are
    comparable across epochs and across runs with the same seed. Without
    validation examples the mean training loss is monitored instead.

    Raises:
        StageError: On non-finite values; ``report`` is attached.
    """
    tag = f"[{stage.upper()} {job_id}]"
    params = {name: tensors[name].copy() for name in trainable}
    frozen = {name: value for name, value in tensors.items() if name not in params}
    dtype = cfg.np_dtype
    optimizer = make_optimizer(cfg.optimizer, cfg.eta)
    result = TrainResult(params=params)
    best_loss = math.inf
    best_params = {name: value.copy() for name, value in params.items()}
    stale = 0

    for epoch in range(1, cfg.max_epochs + 1):
        epoch_rng = rng.derive("epoch", epoch)
        order = epoch_rng.permutation(len(train_examples))
        total = 0.0
        try:
            for start in range(0, len(order), cfg.batch_size):
                batch = [train_examples[i] for i in order[start:start + cfg.batch_size]]
                tape = Tape(dtype=dtype)
                nodes = _bind(tape, params, frozen, trainable=True)
                loss = ops.stack_mean([example_loss(tape, nodes, ex, epoch_rng, True) for ex in batch])
                grads = backward(tape, loss)
                optimizer.step(params, {name: grads[name] for name in params})
                total += float(loss.value[0, 0]) * len(batch)
            train_loss = total / max(len(order), 1)
            if val_examples:
                val_loss = evaluate_loss(example_loss, params, frozen, val_examples, rng.derive("validation"), dtype)
            else:
                val_loss = train_loss
            if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
                raise NonFiniteError(f"loss became {train_loss} / {val_loss}")
        except NonFiniteError as e:
            if run_log is not None:
                run_log.log_error(stage, str(e))
            raise StageError(f"{tag} diverged at epoch {epoch}: {e}", report) from e

        result.train_loss.append(train_loss)
        result.val_loss.append(val_loss)
        result.epochs_run = epoch
        logger.debug("%s epoch %d: train %.6f, val %.6f", tag, epoch, train_loss, val_loss)
        if run_log is not None:
            run_log.log_epoch(stage, job_id, epoch, train_loss, val_loss if val_examples else None)

        if val_loss < best_loss:
            best_loss, result.best_epoch, stale = val_loss, epoch, 0
            best_params = {name: value.copy() for name, value in params.items()}
        else:
            stale += 1
            if stale >= cfg.patience:
                logger.info("%s early stop at epoch %d (best %d)", tag, epoch, result.best_epoch)
                break

    if cfg.restore_best and result.best_epoch > 0:
        result.params = best_params
    return result
