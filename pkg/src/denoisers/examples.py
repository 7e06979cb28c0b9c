"""Sliding next-event training examples."""

from dataclasses import dataclass
from typing import Generic, Sequence, TypeVar

from ..config import MAX_HISTORY
from ..data.models import Visit

Item = TypeVar("Item", int, Visit)


@dataclass(frozen=True)
class TrainingExample(Generic[Item]):
    """``history`` precedes ``target`` in one sequence; items are category ids or Visits."""

    history: tuple[Item, ...]
    target: Item


def sliding_examples(sequence: Sequence[Item], max_history: int = MAX_HISTORY) -> list[TrainingExample[Item]]:
    """One example per position ``i >= 1`` with up to ``max_history`` preceding events."""
    if max_history < 1:
        raise ValueError(f"max_history must be positive, got {max_history}")
    return [
        TrainingExample(tuple(sequence[max(0, i - max_history):i]), sequence[i])
        for i in range(1, len(sequence))
    ]


def holdout_examples(
    sequences: Sequence[Sequence[Item]], max_history: int = MAX_HISTORY
) -> tuple[list[TrainingExample[Item]], list[TrainingExample[Item]]]:
    """Training and validation examples; the last pair of each sequence is held out.

    Sequences yielding a single pair keep it for training.
    """
    train: list[TrainingExample[Item]] = []
    val: list[TrainingExample[Item]] = []
    for sequence in sequences:
        examples = sliding_examples(sequence, max_history)
        if len(examples) >= 2:
            train.extend(examples[:-1])
            val.append(examples[-1])
        else:
            train.extend(examples)
    return train, val
