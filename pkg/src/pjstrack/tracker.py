"""Patchwise joint-sparse tracker.

Per frame: propagate particles, crop and partition every candidate, code each
candidate patch jointly with the same patch of the last ``k`` tracked
targets, score candidates by the summed reconstruction error inside each
patch's own template, keep the best, resample, and update the dictionary
with the unoccluded patches of the best candidate.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .appearance import (
    AppearanceDictionary,
    TargetHistory,
    init_dictionary,
    oldest_slot,
    overwrite_slot,
    replace_target,
)
from .errors import ConfigError
from .motion import (
    AffineState,
    ParticleSet,
    affine_matrices,
    crop_warp_batch,
    partition,
    propagate,
    resample,
    state_to_box,
)
from .occlusion import (
    OcclusionChain,
    map_transitions,
    occlusion_prior,
    posterior_from_errors,
    update_chain,
)
from .solvers import mfocuss_batch, somp_batch

log = logging.getLogger(__name__)

SOLVERS = ("pjs-s", "pjs-m")


@dataclass
class TrackerConfig:
    template_side: int = 32
    patch_side: int = 8
    n_targets: int = 10
    n_particles: int = 600
    sparsity: int = 4
    gamma: float = 0.001
    group_size: int = 4
    sigma: tuple[float, ...] = (6.0, 6.0, 0.02, 0.002, 0.002, 0.0)
    solver: str = "pjs-s"
    a: float = 4.0
    b: float = 8.0
    c: float = 8.0
    d: float = 4.0
    seed: int = 0
    init_shift: int = 2
    replace_recent: bool = True
    focuss_tol: float = 1e-6
    focuss_max_iter: int = 100
    # lasso weight for coding the best candidate during occlusion detection
    occlusion_lambda: float = 0.1
    # per-patch error scales; None means equal variance for every patch
    patch_sigmas: tuple[float, ...] | None = None

    def __post_init__(self):
        self.sigma = tuple(float(s) for s in self.sigma)
        if self.patch_sigmas is not None:
            self.patch_sigmas = tuple(float(s) for s in self.patch_sigmas)
        self.validate()

    @property
    def n_patches(self) -> int:
        return (self.template_side // self.patch_side) ** 2

    def validate(self) -> None:
        if self.patch_side < 1 or self.template_side % self.patch_side:
            raise ConfigError(
                f"template_side {self.template_side} is not a multiple of patch_side {self.patch_side}"
            )
        if self.sparsity < 1:
            raise ConfigError("sparsity must be >= 1")
        if self.sparsity > min(self.patch_side**2, self.n_targets * self.n_patches):
            raise ConfigError("sparsity exceeds the dictionary dimensions")
        if self.group_size < 0:
            raise ConfigError("group_size must be >= 0")
        if self.n_targets < 2:
            raise ConfigError("n_targets must be >= 2")
        if self.n_particles < 1:
            raise ConfigError("n_particles must be >= 1")
        if len(self.sigma) != 6 or min(self.sigma) < 0:
            raise ConfigError("sigma needs six nonnegative values")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if min(self.a, self.b, self.c, self.d) <= 1:
            raise ConfigError("beta hyperparameters a, b, c, d must exceed 1")
        if self.gamma < 0 or self.occlusion_lambda < 0:
            raise ConfigError("gamma and occlusion_lambda must be >= 0")
        if self.patch_sigmas is not None and (
            len(self.patch_sigmas) != self.n_patches or min(self.patch_sigmas) <= 0
        ):
            raise ConfigError(f"patch_sigmas needs {self.n_patches} positive values")

    @classmethod
    def from_dict(cls, values: dict) -> "TrackerConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config key: {', '.join(unknown)}")
        return cls(**values)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["sigma"] = list(self.sigma)
        if self.patch_sigmas is not None:
            out["patch_sigmas"] = list(self.patch_sigmas)
        return out


@dataclass
class FrameResult:
    frame_index: int
    state: AffineState
    box: tuple[float, float, float, float]
    log_likelihood: float
    occlusion_mask: np.ndarray
    per_patch_errors: np.ndarray
    occlusion_prob: np.ndarray = field(default_factory=lambda: np.zeros(0))
    warning: bool = False


@dataclass
class TrackerState:
    particles: ParticleSet
    dictionary: AppearanceDictionary
    history: TargetHistory
    chains: list[OcclusionChain]
    warmup_left: int
    frame_index: int = 0


def _patch_weights(config: TrackerConfig) -> np.ndarray:
    if config.patch_sigmas is None:
        return np.ones(config.n_patches)
    return 1.0 / np.square(config.patch_sigmas)


def candidate_errors(
    dictionary: AppearanceDictionary,
    history: TargetHistory,
    patches: np.ndarray,
    config: TrackerConfig,
) -> np.ndarray:
    """Own-template reconstruction error of every candidate patch, shape ``(P, m)``.

    ``patches`` is ``(P, m, M)``.  Each patch is coded together with the same
    patch of every target in ``history`` and only its own column of the code
    is used.
    """
    patches = np.asarray(patches, dtype=float)
    P, m, M = patches.shape
    D = dictionary.atoms
    N = D.shape[1]
    n = dictionary.n_targets
    kp = len(history)
    Y = np.empty((P, m, M, kp + 1))
    Y[..., -1] = patches
    if kp:
        H = history.stacked()
        Y[..., :kp] = H[None]
    Y = Y.reshape(P * m, M, kp + 1)

    if config.solver == "pjs-s":
        DtY = np.empty((P, m, N, kp + 1))
        DtY[..., -1] = patches @ D
        if kp:
            DtY[..., :kp] = np.matmul(D.T, H)[None]
        C = somp_batch(D, Y, config.sparsity, gram=D.T @ D, DtY=DtY.reshape(P * m, N, kp + 1))
    else:
        C, _, _, _ = mfocuss_batch(D, Y, config.gamma, config.focuss_tol, config.focuss_max_iter)

    ar = np.arange(m)
    c_own = C[:, :, -1].reshape(P, m, m, n)[:, ar, ar, :]  # (P, m, n)
    blocks = D.reshape(M, m, n).transpose(1, 0, 2)  # (m, M, n)
    recon = np.einsum("imn,pin->pim", blocks, c_own)
    resid = patches - recon
    return np.einsum("pim,pim->pi", resid, resid)


def candidate_loglik(
    dictionary: AppearanceDictionary,
    history: TargetHistory,
    patches: np.ndarray,
    config: TrackerConfig,
) -> float:
    """Log-likelihood of one candidate given as ``(m, M)`` patches."""
    err = candidate_errors(dictionary, history, np.asarray(patches)[None], config)[0]
    return float(-(err * _patch_weights(config)).sum())


def _valid_states(states: np.ndarray) -> np.ndarray:
    A = affine_matrices(states)
    det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    return np.all(np.isfinite(states), axis=1) & (det >= 1e-9) & (states[:, 3] > 0) & (states[:, 4] > 0)


def update_appearance(
    state: TrackerState,
    best_patches: np.ndarray,
    config: TrackerConfig,
    rng: np.random.Generator,
):
    """Occlusion test on the best candidate followed by the dictionary update.

    Returns ``(dictionary, chains, mask, occlusion probabilities)``.
    """
    dictionary = state.dictionary
    D = dictionary.atoms
    m = dictionary.n_patches
    codes, _, _, _ = mfocuss_batch(
        D, best_patches[:, :, None], config.occlusion_lambda, config.focuss_tol, config.focuss_max_iter
    )
    mask = np.zeros(m, dtype=bool)
    probs = np.zeros(m)
    chains = []
    for i in range(m):
        own = np.zeros(D.shape[1], dtype=bool)
        own[dictionary.index_set(i)] = True
        code = codes[i, :, 0]
        y = best_patches[i]
        r_in = y - D @ np.where(own, code, 0.0)
        r_out = y - D @ np.where(own, 0.0, code)
        chain = state.chains[i]
        mu, eta = map_transitions(chain)
        prior = occlusion_prior(chain.last_state, mu, eta)
        probs[i] = posterior_from_errors(float(r_in @ r_in), float(r_out @ r_out), prior)
        mask[i] = probs[i] > 0.5
        chains.append(update_chain(chain, int(mask[i])))

    if state.warmup_left > 0:
        # shifted seed targets are retired oldest first, still skipping occluded patches
        if not mask.all():
            dictionary = overwrite_slot(dictionary, oldest_slot(dictionary), best_patches, mask)
    else:
        dictionary = replace_target(dictionary, best_patches, mask, rng, config.replace_recent)
    return dictionary, chains, mask, probs


def init_tracker(frame: np.ndarray, box, config: TrackerConfig, rng: np.random.Generator):
    """Tracker state from the first frame and its ground-truth box.

    Returns the state and a :class:`FrameResult` for frame 0 that echoes the
    given box.
    """
    start = AffineState.from_box(box, config.template_side)
    dictionary = init_dictionary(
        frame, start, config.template_side, config.patch_side, config.n_targets, rng, config.init_shift
    )
    template = crop_warp_batch(frame, start.as_array()[None], config.template_side)
    patches = partition(template, config.patch_side)[0]
    history = TargetHistory(config.group_size)
    history.push(patches)
    chains = [
        OcclusionChain(a=config.a, b=config.b, c=config.c, d=config.d) for _ in range(config.n_patches)
    ]
    state = TrackerState(
        particles=ParticleSet.replicate(start, config.n_particles),
        dictionary=dictionary,
        history=history,
        chains=chains,
        warmup_left=config.n_targets - 1,
    )
    m = config.n_patches
    first = FrameResult(0, start, state_to_box(start, config.template_side), 0.0,
                        np.zeros(m, dtype=bool), np.zeros(m), np.zeros(m))
    return state, first


def track_frame(
    frame: np.ndarray,
    state: TrackerState,
    config: TrackerConfig,
    rng: np.random.Generator,
) -> tuple[FrameResult, TrackerState]:
    """Advance the tracker by one frame."""
    particles = propagate(state.particles, config.sigma, rng)
    P = len(particles)
    loglik = np.full(P, -np.inf)
    errors = np.full((P, config.n_patches), np.inf)
    valid = _valid_states(particles.states)
    patches = np.zeros((P, config.n_patches, config.patch_side**2))
    if valid.any():
        templates = crop_warp_batch(frame, particles.states[valid], config.template_side)
        patches[valid] = partition(templates, config.patch_side)
        err = candidate_errors(state.dictionary, state.history, patches[valid], config)
        errors[valid] = err
        loglik[valid] = -(err * _patch_weights(config)).sum(axis=1)

    finite = np.isfinite(loglik)
    warning = not finite.any()
    if warning:
        log.warning("frame %d: no finite candidate likelihood, using uniform weights",
                    state.frame_index + 1)
        weights = np.full(P, 1.0 / P)
        best = 0
    else:
        top = loglik[finite].max()
        weights = np.where(finite, np.exp(np.where(finite, loglik, top) - top), 0.0)
        weights /= weights.sum()
        best = int(np.argmax(np.where(finite, loglik, -np.inf)))

    best_state = AffineState.from_array(particles.states[best]) if valid[best] else None
    if best_state is None:
        # every candidate was invalid; hold the previous estimate
        best_state = AffineState.from_array(state.particles.states[0])
        best_patches = partition(
            crop_warp_batch(frame, best_state.as_array()[None], config.template_side),
            config.patch_side,
        )[0]
    else:
        best_patches = patches[best]

    particles = resample(ParticleSet(particles.states, weights), rng)
    dictionary, chains, mask, probs = update_appearance(state, best_patches, config, rng)
    history = state.history.copy()
    history.push(best_patches)
    consumed = state.warmup_left > 0 and not mask.all()
    new_state = TrackerState(
        particles=particles,
        dictionary=dictionary,
        history=history,
        chains=chains,
        warmup_left=state.warmup_left - int(consumed),
        frame_index=state.frame_index + 1,
    )
    result = FrameResult(
        frame_index=new_state.frame_index,
        state=best_state,
        box=state_to_box(best_state, config.template_side),
        log_likelihood=float(loglik[best]) if not warning else float("-inf"),
        occlusion_mask=mask,
        per_patch_errors=errors[best],
        occlusion_prob=probs,
        warning=warning,
    )
    return result, new_state


def run_tracker(
    frames: Iterable[np.ndarray],
    init_box,
    config: TrackerConfig,
    seed: int | None = None,
    on_frame=None,
) -> list[FrameResult]:
    """Track through ``frames`` starting from ``init_box`` on the first one.

    ``on_frame(result, state)`` is called after every frame, including the
    first.
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    it = iter(frames)
    first = next(it)
    state, result = init_tracker(first, init_box, config, rng)
    results = [result]
    if on_frame:
        on_frame(result, state)
    for frame in it:
        result, state = track_frame(frame, state, config, rng)
        results.append(result)
        if on_frame:
            on_frame(result, state)
    return results


def csv_header(n_patches: int) -> list[str]:
    return (
        ["frame", "x", "y", "w", "h", "loglik", "warning"]
        + [f"occ_{i:02d}" for i in range(n_patches)]
        + [f"err_{i:02d}" for i in range(n_patches)]
    )


def write_results_csv(path, results: list[FrameResult]) -> None:
    n_patches = len(results[0].occlusion_mask)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(csv_header(n_patches))
        for r in results:
            writer.writerow(
                [r.frame_index]
                + [f"{v:.6f}" for v in r.box]
                + [f"{r.log_likelihood:.6f}", int(r.warning)]
                + [int(b) for b in r.occlusion_mask]
                + [f"{e:.6f}" for e in r.per_patch_errors]
            )
