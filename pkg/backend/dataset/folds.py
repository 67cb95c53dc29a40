"""Deterministic (optionally label-stratified) k-fold assignment."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from autograd.rng import Rng
from errors import ConfigError, DatasetError


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: dict[str, int]
    stratified: bool
    seed: int

    def fold_of(self, case_id: str) -> int:
        return self.assignments[case_id]

    def test_ids(self, fold: int) -> list[str]:
        return sorted(cid for cid, f in self.assignments.items() if f == fold)

    def train_ids(self, fold: int) -> list[str]:
        return sorted(cid for cid, f in self.assignments.items() if f != fold)

    def fold_sizes(self) -> list[int]:
        counts = np.bincount(list(self.assignments.values()), minlength=self.k)
        return [int(c) for c in counts]


def kfold_split(
    case_ids: Sequence[str],
    labels: Sequence[int],
    k: int,
    seed: int,
    stratified: bool = True,
) -> FoldPlan:
    """Shuffle by seed and deal cases round-robin into k folds.

    With stratification each class is shuffled separately and dealt in turn,
    so per-fold class counts differ by at most one.
    """
    if len(case_ids) != len(labels):
        raise DatasetError(f"{len(case_ids)} case ids but {len(labels)} labels")
    if k < 2:
        raise ConfigError(f"k-fold needs k >= 2, got {k}")
    if len(case_ids) < k:
        raise ConfigError(f"cannot split {len(case_ids)} cases into {k} folds")

    order = sorted(range(len(case_ids)), key=lambda i: case_ids[i])
    ids = [case_ids[i] for i in order]
    y = np.asarray(labels)[order]
    gen = Rng(seed).generator("folds")

    if stratified:
        dealt: list[int] = []
        for cls in np.unique(y):
            members = np.flatnonzero(y == cls)
            if members.size < k:
                raise DatasetError(f"class {int(cls)} has {members.size} cases, fewer than k={k} folds")
            dealt.extend(members[gen.permutation(members.size)].tolist())
    else:
        dealt = gen.permutation(len(ids)).tolist()

    assignments = {ids[index]: position % k for position, index in enumerate(dealt)}
    return FoldPlan(k=k, assignments=assignments, stratified=stratified, seed=seed)
