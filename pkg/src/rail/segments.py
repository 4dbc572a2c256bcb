"""Discriminator input representations.

A representation turns a trajectory into fixed-size segment vectors for the
discriminator. Swapping the representation is what turns a state-action
imitation algorithm into an imitation-from-observation one, so the
observation-only variants are hard-walled: asking for actions a trajectory
does not carry raises ActionsUnavailableError.

Supported kinds and their tagged config strings:

    state_action            (s_t, a_t)
    state_pair              (s_t, s_{t+1})
    state_skip:K            (s_t, s_{t+K}), K >= 1
    state_delta             (s_t, s_{t+1} - s_t)
    affine_window:W:state_window
                            elementwise-affine transform of the stacked
                            window (s_t, ..., s_{t+W-1}); the transform
                            itself is applied downstream via affine_apply

Segments are plain float64 vectors; batches are (n, segment_dim) arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("state_action", "state_pair", "state_skip", "state_delta", "affine_window")


class ActionsUnavailableError(RuntimeError):
    """A state-action representation was asked of observation-only data."""


@dataclass
class Trajectory:
    """One episode: observations (L, obs_dim) and optionally actions (L-1, act_dim)."""

    observations: np.ndarray
    actions: np.ndarray | None = None

    def __post_init__(self):
        self.observations = np.asarray(self.observations, dtype=np.float64)
        if self.observations.ndim != 2 or len(self.observations) < 1:
            raise ValueError("observations must be a non-empty (L, obs_dim) array")
        if self.actions is not None:
            self.actions = np.asarray(self.actions, dtype=np.float64)
            if self.actions.ndim != 2 or len(self.actions) != len(self.observations) - 1:
                raise ValueError("actions must have shape (L-1, act_dim)")

    def __len__(self) -> int:
        return len(self.observations)


@dataclass(frozen=True)
class SegmentSpec:
    kind: str
    skip: int = 1    # state_skip only
    window: int = 4  # affine_window only

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown segment kind {self.kind!r}; have {KINDS}")
        if self.kind == "state_skip" and self.skip < 1:
            raise ValueError("state_skip needs skip >= 1")
        if self.kind == "affine_window" and self.window < 1:
            raise ValueError("affine_window needs window >= 1")

    @property
    def needs_actions(self) -> bool:
        return self.kind == "state_action"

    @property
    def lookahead(self) -> int:
        """Observations needed beyond s_t to build the segment anchored at t."""
        if self.kind == "state_action":
            return 0
        if self.kind in ("state_pair", "state_delta"):
            return 1
        if self.kind == "state_skip":
            return self.skip
        return self.window - 1

    def min_trajectory_len(self) -> int:
        return max(2, self.lookahead + 1)

    def n_segments(self, traj_len: int) -> int:
        """Closed-form segment count for a trajectory with traj_len observations."""
        if self.kind in ("state_action", "state_pair", "state_delta"):
            return traj_len - 1
        if self.kind == "state_skip":
            return traj_len - self.skip
        return traj_len - self.window + 1

    def tag(self) -> str:
        if self.kind == "state_skip":
            return f"state_skip:{self.skip}"
        if self.kind == "affine_window":
            return f"affine_window:{self.window}:state_window"
        return self.kind


def parse_segment_spec(tag: str) -> SegmentSpec:
    """Parse the tagged config string form (see module docstring)."""
    parts = tag.strip().split(":")
    kind = parts[0]
    if kind in ("state_action", "state_pair", "state_delta"):
        if len(parts) != 1:
            raise ValueError(f"{kind} takes no parameters, got {tag!r}")
        return SegmentSpec(kind)
    if kind == "state_skip":
        if len(parts) != 2:
            raise ValueError(f"expected state_skip:K, got {tag!r}")
        return SegmentSpec(kind, skip=int(parts[1]))
    if kind == "affine_window":
        if len(parts) != 3 or parts[2] != "state_window":
            raise ValueError(
                f"expected affine_window:W:state_window, got {tag!r} "
                "(state_window is the only supported base)"
            )
        return SegmentSpec(kind, window=int(parts[1]))
    raise ValueError(f"unknown segment kind in {tag!r}; have {KINDS}")


def segment_dim(spec: SegmentSpec, obs_dim: int, act_dim: int) -> int:
    if obs_dim < 1 or act_dim < 1:
        raise ValueError("dims must be positive")
    if spec.kind == "state_action":
        return obs_dim + act_dim
    if spec.kind in ("state_pair", "state_skip", "state_delta"):
        return 2 * obs_dim
    return spec.window * obs_dim


def extract_segments(traj: Trajectory, spec: SegmentSpec) -> np.ndarray:
    """All segments of one trajectory, stacked as (n_segments, segment_dim).

    Never straddles episodes: the caller passes one episode at a time.
    """
    obs = traj.observations
    length = len(obs)
    if length < spec.min_trajectory_len():
        raise ValueError(
            f"trajectory of length {length} too short for {spec.tag()} "
            f"(needs >= {spec.min_trajectory_len()})"
        )
    if spec.kind == "state_action":
        if traj.actions is None:
            raise ActionsUnavailableError(
                "actions unavailable: observation-only trajectory cannot "
                "produce state_action segments"
            )
        return np.concatenate([obs[:-1], traj.actions], axis=1)
    if spec.kind == "state_pair":
        return np.concatenate([obs[:-1], obs[1:]], axis=1)
    if spec.kind == "state_skip":
        k = spec.skip
        return np.concatenate([obs[: length - k], obs[k:]], axis=1)
    if spec.kind == "state_delta":
        return np.concatenate([obs[:-1], obs[1:] - obs[:-1]], axis=1)
    w = spec.window
    n = length - w + 1
    return np.concatenate([obs[i : i + n] for i in range(w)], axis=1)


@dataclass
class AffineParams:
    """Elementwise (diagonal) affine map scale * x + shift over segment values."""

    scale: np.ndarray
    shift: np.ndarray
    trainable: bool = False

    def __post_init__(self):
        self.scale = np.asarray(self.scale, dtype=np.float64)
        self.shift = np.asarray(self.shift, dtype=np.float64)
        if self.scale.shape != self.shift.shape or self.scale.ndim != 1:
            raise ValueError("scale and shift must be 1-d with equal length")
        if not np.all(self.scale > 0):
            raise ValueError("scale must be strictly positive")

    @property
    def dim(self) -> int:
        return self.scale.shape[0]


def identity_affine(dim: int, trainable: bool = False) -> AffineParams:
    return AffineParams(np.ones(dim), np.zeros(dim), trainable)


def affine_apply(params: AffineParams, segments: np.ndarray) -> np.ndarray:
    segments = np.asarray(segments, dtype=np.float64)
    if segments.shape[-1] != params.dim:
        raise ValueError(
            f"segment dim {segments.shape[-1]} does not match affine dim {params.dim}"
        )
    return params.scale * segments + params.shift


def affine_grad(
    params: AffineParams, segments: np.ndarray, upstream: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradients of sum(upstream * affine_apply(...)).

    Returns (grad_scale, grad_shift, grad_segments); batch dims are summed
    into the parameter gradients.
    """
    segments = np.atleast_2d(np.asarray(segments, dtype=np.float64))
    upstream = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    if segments.shape != upstream.shape or segments.shape[-1] != params.dim:
        raise ValueError("segments/upstream shape mismatch")
    grad_scale = (upstream * segments).sum(axis=0)
    grad_shift = upstream.sum(axis=0)
    grad_segments = upstream * params.scale
    return grad_scale, grad_shift, grad_segments
