"""Patch-template dictionary for the target appearance.

The dictionary stores ``n`` past targets, each split into ``m`` patches.  Its
columns are grouped by patch: block ``i`` (columns ``i*n .. i*n+n-1``) is the
patch template for patch ``i`` and column ``i*n + j`` holds patch ``i`` of the
target stored in slot ``j``.  Slots carry a recency rank, ``n`` being the
newest.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .motion import AffineState, crop_warp_batch, partition
from .solvers import normalize_atoms


@dataclass
class AppearanceDictionary:
    atoms: np.ndarray  # (M, m * n)
    n_targets: int
    ages: np.ndarray  # (n,) recency ranks, a permutation of 1..n
    template_side: int
    patch_side: int

    @property
    def n_patches(self) -> int:
        return (self.template_side // self.patch_side) ** 2

    @property
    def patch_dim(self) -> int:
        return self.patch_side**2

    def index_set(self, i: int) -> np.ndarray:
        return np.arange(i * self.n_targets, (i + 1) * self.n_targets)

    def complement(self, i: int) -> np.ndarray:
        return np.setdiff1d(np.arange(self.atoms.shape[1]), self.index_set(i))

    def block(self, i: int) -> np.ndarray:
        return self.atoms[:, i * self.n_targets : (i + 1) * self.n_targets]

    def slot_columns(self, j: int) -> np.ndarray:
        return np.arange(self.n_patches) * self.n_targets + j

    def copy(self) -> "AppearanceDictionary":
        return AppearanceDictionary(
            self.atoms.copy(), self.n_targets, self.ages.copy(), self.template_side, self.patch_side
        )


def build_dictionary(targets: np.ndarray, template_side: int, patch_side: int) -> AppearanceDictionary:
    """Dictionary from per-slot patch lists ``(n, m, M)``, oldest slot first."""
    targets = np.asarray(targets, dtype=float)
    n, m, M = targets.shape
    # (n, m, M) -> (M, m, n) -> columns grouped by patch
    atoms = normalize_atoms(targets.transpose(2, 1, 0).reshape(M, m * n))
    return AppearanceDictionary(atoms, n, np.arange(1, n + 1), template_side, patch_side)


def shift_offsets(n: int, max_shift: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` integer (dx, dy) offsets with each component in {-s..-1, 1..s}."""
    if max_shift <= 0:
        return np.zeros((n, 2))
    choices = np.concatenate([np.arange(-max_shift, 0), np.arange(1, max_shift + 1)])
    return rng.choice(choices, size=(n, 2)).astype(float)


def init_dictionary(
    frame: np.ndarray,
    state: AffineState,
    template_side: int,
    patch_side: int,
    n: int,
    rng: np.random.Generator,
    max_shift: int = 2,
) -> AppearanceDictionary:
    """Seed a dictionary from the first frame.

    The newest slot holds the given target; the other ``n - 1`` slots hold
    the target re-cropped after shifting its center by a few pixels.
    """
    if n < 2:
        raise ValueError(f"dictionary needs at least two targets, got {n}")
    base = state.as_array()
    states = np.tile(base, (n, 1))
    states[: n - 1, :2] += shift_offsets(n - 1, max_shift, rng)
    templates = crop_warp_batch(frame, states, template_side)
    return build_dictionary(partition(templates, patch_side), template_side, patch_side)


def choose_slot(ages: np.ndarray, rng: np.random.Generator, prefer_recent: bool = True) -> int:
    """Draw a slot with probability linear in its recency rank.

    With ``prefer_recent`` the newest slot (rank n) has weight n and the
    oldest weight 1; otherwise the order is reversed.
    """
    ages = np.asarray(ages)
    weights = ages if prefer_recent else (len(ages) + 1 - ages)
    weights = weights / weights.sum()
    return int(rng.choice(len(ages), p=weights))


def overwrite_slot(
    dictionary: AppearanceDictionary,
    slot: int,
    new_patches: np.ndarray,
    occlusion_mask,
) -> AppearanceDictionary:
    """Copy of ``dictionary`` with the unoccluded patches of ``slot`` replaced.

    The slot becomes the newest; other ranks above it move down by one.
    """
    mask = np.asarray(occlusion_mask, dtype=bool)
    out = dictionary.copy()
    cols = out.slot_columns(slot)[~mask]
    out.atoms[:, cols] = normalize_atoms(np.asarray(new_patches, dtype=float)[~mask].T)
    old = out.ages[slot]
    out.ages[out.ages > old] -= 1
    out.ages[slot] = out.n_targets
    return out


def replace_target(
    dictionary: AppearanceDictionary,
    new_patches: np.ndarray,
    occlusion_mask,
    rng: np.random.Generator,
    prefer_recent: bool = True,
) -> AppearanceDictionary:
    """Replace one randomly chosen stored target with the new one, skipping occluded patches.

    A fully occluded target leaves the dictionary untouched and draws nothing
    from ``rng``.
    """
    mask = np.asarray(occlusion_mask, dtype=bool)
    if mask.shape != (dictionary.n_patches,):
        raise ValueError(f"occlusion mask needs {dictionary.n_patches} entries, got {mask.shape}")
    if mask.all():
        return dictionary
    slot = choose_slot(dictionary.ages, rng, prefer_recent)
    return overwrite_slot(dictionary, slot, new_patches, mask)


def oldest_slot(dictionary: AppearanceDictionary) -> int:
    return int(np.argmin(dictionary.ages))


class TargetHistory:
    """The last ``k`` committed best-candidate patch lists, oldest first."""

    def __init__(self, capacity: int):
        if capacity < 0:
            raise ValueError("history capacity must be >= 0")
        self.capacity = capacity
        self._items: deque[np.ndarray] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def push(self, patches: np.ndarray) -> None:
        if self.capacity:
            self._items.append(np.array(patches, dtype=float))

    def stacked(self) -> np.ndarray:
        """History as ``(m, M, k')``; column order is oldest first."""
        if not self._items:
            return np.zeros((0, 0, 0))
        return np.stack(list(self._items), axis=-1)

    def copy(self) -> "TargetHistory":
        other = TargetHistory(self.capacity)
        other._items.extend(self._items)
        return other


def group_signals(history: TargetHistory, candidate_patch: np.ndarray, patch_index: int) -> np.ndarray:
    """``M x (k'+1)`` group: history patches oldest first, candidate last."""
    y = np.asarray(candidate_patch, dtype=float)[:, None]
    if len(history) == 0:
        return y.copy()
    return np.concatenate([history.stacked()[patch_index], y], axis=1)


def save_snapshot(path, dictionary: AppearanceDictionary) -> None:
    """Text dump: a ``M N`` header line, then one row of the atom matrix per line."""
    M, N = dictionary.atoms.shape
    np.savetxt(path, dictionary.atoms, fmt="%.9g", header=f"{M} {N}", comments="")


def load_snapshot(path) -> np.ndarray:
    with open(path) as fh:
        M, N = (int(v) for v in fh.readline().split())
        atoms = np.loadtxt(fh, ndmin=2)
    if atoms.shape != (M, N):
        raise ValueError(f"snapshot header says {M}x{N}, body is {atoms.shape}")
    return atoms
