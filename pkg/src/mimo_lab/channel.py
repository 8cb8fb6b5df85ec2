"""Per-coherence-block fading synthesis and spatial (de)spreading.

Effective channels live in the r-dimensional eigenbasis of their link:
w = Lambda^(1/2) h with h ~ CN(0, I_r), so the full M-dimensional channel
U w is never materialized unless explicitly requested.  Cross-projected
channels U_rx^H U_src w_src carry what one user's despreader sees of
another user's channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covmodel import (
    InvalidProfile,
    NetworkScenario,
    complex_gaussian,
    fourier_support,
)


@dataclass
class ChannelBlock:
    """One coherence block: effective channels w keyed by (l, l', k)."""

    w: dict
    trial_id: int = 0


def realize_block(scenario: NetworkScenario, rng: np.random.Generator) -> ChannelBlock:
    """Draw every link's effective channel w = Lambda^(1/2) h, independently."""
    w = {}
    for key, prof in scenario.profiles.items():
        w[key] = np.sqrt(prof.lam) * complex_gaussian(rng, prof.r)
    return ChannelBlock(w=w)


def despread(U: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Project an M-dimensional observation onto the link eigenbasis: U^H y."""
    if U.shape[0] != y.shape[0]:
        raise ValueError(f"dimension mismatch: U is {U.shape}, y has length {y.shape[0]}")
    return U.conj().T @ y

def spread(U: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Expand an r-dimensional vector into M dimensions: U g (an isometry)."""
    if U.shape[1] != g.shape[0]:
        raise ValueError(f"dimension mismatch: U is {U.shape}, g has length {g.shape[0]}")
    return U @ g


def cross_channel(U_rx: np.ndarray, U_src: np.ndarray, w_src: np.ndarray) -> np.ndarray:
    """Channel of a foreign link seen through a user's despreader.

    Returns (U_rx^H U_src) w_src; a projection, so the norm never grows.
    """
    if U_rx.shape[0] != U_src.shape[0]:
        raise ValueError("bases must share the antenna dimension M")
    return U_rx.conj().T @ (U_src @ w_src)


def angular_overlap(U_a: np.ndarray, U_b: np.ndarray) -> int:
    """Number of DFT columns shared by two partial Fourier bases."""
    if U_a.shape[0] != U_b.shape[0]:
        raise ValueError("bases must share the antenna dimension M")
    try:
        ia = fourier_support(U_a)
        ib = fourier_support(U_b)
    except InvalidProfile as exc:
        raise InvalidProfile(
            "angular_overlap requires partial Fourier bases"
        ) from exc
    return int(len(np.intersect1d(ia, ib)))


def full_channel(scenario: NetworkScenario, block: ChannelBlock, l: int, lp: int, k: int) -> np.ndarray:
    """Materialize the M-dimensional channel h = U w for one link."""
    prof = scenario.profile(l, lp, k)
    return prof.U @ block.w[(l, lp, k)]
