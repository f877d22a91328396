"""Per-patch occlusion detection.

Each patch carries a two-state Markov chain (0 = clear, 1 = occluded) whose
transition probabilities are MAP estimates under beta priors:

* ``mu``  - probability of leaving occlusion (1 -> 0), prior Beta(a, b)
* ``eta`` - probability of entering occlusion (0 -> 1), prior Beta(c, d)

The occlusion posterior combines that prior with likelihoods built from how
well the patch is reconstructed by its own patch template versus all the
other templates.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateEvidenceError


@dataclass(frozen=True)
class OcclusionChain:
    stay_occluded: int = 0  # 1 -> 1
    leave_occlusion: int = 0  # 1 -> 0
    enter_occlusion: int = 0  # 0 -> 1
    stay_clear: int = 0  # 0 -> 0
    a: float = 4.0
    b: float = 8.0
    c: float = 8.0
    d: float = 4.0
    last_state: int = 0
    history: tuple[int, ...] = ()

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) <= 1:
            raise ValueError("beta hyperparameters must exceed 1")


def map_transitions(chain: OcclusionChain) -> tuple[float, float]:
    """MAP estimates ``(mu, eta)`` given the counted transitions."""
    up = chain.a - 1 + chain.leave_occlusion
    mu = up / (up + chain.b - 1 + chain.stay_occluded)
    up = chain.c - 1 + chain.enter_occlusion
    eta = up / (up + chain.d - 1 + chain.stay_clear)
    return mu, eta


def occlusion_prior(last_state: int, mu: float, eta: float) -> tuple[float, float]:
    """``(p(clear), p(occluded))`` for the next state given the last one."""
    if last_state:
        return mu, 1.0 - mu
    return 1.0 - eta, eta


def reconstruction_errors(atoms: np.ndarray, patch: np.ndarray, code: np.ndarray, own: np.ndarray):
    """Squared errors of the patch rebuilt from its own template and from the rest.

    ``own`` is a boolean mask over the dictionary columns selecting the
    patch's template.
    """
    code = np.asarray(code, dtype=float).ravel()
    inside = np.where(own, code, 0.0)
    outside = np.where(own, 0.0, code)
    r_in = patch - atoms @ inside
    r_out = patch - atoms @ outside
    return float(r_in @ r_in), float(r_out @ r_out)


def occlusion_likelihoods(dictionary, patch, code, patch_index: int) -> tuple[float, float]:
    """``(L_clear, L_occluded)`` for one patch and its code on the full dictionary."""
    own = np.zeros(dictionary.atoms.shape[1], dtype=bool)
    own[dictionary.index_set(patch_index)] = True
    e_in, e_out = reconstruction_errors(dictionary.atoms, np.asarray(patch, dtype=float), code, own)
    return float(np.exp(-e_in)), float(np.exp(-e_out))


def occlusion_posterior(likelihoods, prior) -> float:
    """Probability that the patch is occluded."""
    l_clear, l_occ = likelihoods
    p_clear, p_occ = prior
    if l_clear <= 0 and l_occ <= 0:
        raise DegenerateEvidenceError("both occlusion likelihoods are zero")
    num = l_occ * p_occ
    den = num + l_clear * p_clear
    if den <= 0:
        raise DegenerateEvidenceError("occlusion evidence has zero total mass")
    return num / den


def posterior_from_errors(err_clear: float, err_occ: float, prior) -> float:
    """:func:`occlusion_posterior` evaluated in the log domain.

    Same value as ``occlusion_posterior((exp(-err_clear), exp(-err_occ)), prior)``
    but immune to underflow for large reconstruction errors.
    """
    p_clear, p_occ = prior
    if p_occ <= 0:
        return 0.0
    if p_clear <= 0:
        return 1.0
    # log odds of clear versus occluded
    z = (np.log(p_clear) - err_clear) - (np.log(p_occ) - err_occ)
    if z >= 0:
        return float(np.exp(-z) / (1.0 + np.exp(-z)))
    return float(1.0 / (1.0 + np.exp(z)))


def update_chain(chain: OcclusionChain, new_state: int) -> OcclusionChain:
    """Count the transition ``last_state -> new_state`` and append it to the history."""
    new_state = int(bool(new_state))
    key = {
        (1, 1): "stay_occluded",
        (1, 0): "leave_occlusion",
        (0, 1): "enter_occlusion",
        (0, 0): "stay_clear",
    }[(chain.last_state, new_state)]
    return replace(
        chain,
        **{key: getattr(chain, key) + 1},
        last_state=new_state,
        history=chain.history + (new_state,),
    )
