"""Synthesize user clicks from ground truth for training and evaluation sessions."""

from __future__ import annotations

from dataclasses import dataclass

from .core import LabeledImage, RandomSource, UserInput


@dataclass(frozen=True)
class SimConfig:
    """Click-simulation parameters.

    n_u_max bounds the training-time draw N_u ~ U{0..n_u_max};
    eval_max_clicks caps clicks per image in an evaluation session;
    eval_sessions is the number of independent sessions to aggregate.
    """

    n_u_max: int = 20
    eval_max_clicks: int = 20
    eval_sessions: int = 5

    def __post_init__(self) -> None:
        if self.n_u_max <= 0 or self.eval_max_clicks <= 0 or self.eval_sessions <= 0:
            raise ValueError("all SimConfig fields must be positive")


def _click_for(gt: LabeledImage, index: int) -> UserInput:
    obj = gt.objects[index]
    cx, cy = obj.box.center
    return UserInput(x=cx, y=cy, class_id=obj.class_id, gt_index=index)


def sample_training_inputs(
    gt: LabeledImage, rng: RandomSource, cfg: SimConfig = SimConfig()
) -> list[UserInput]:
    """Draw K = min(N_u, N_a) clicks on distinct objects, N_u ~ U{0..n_u_max}.

    Each click sits at the exact box center of its object and carries the
    object's class and index.
    """
    n_u = rng.integers(0, cfg.n_u_max)
    k = min(n_u, gt.num_objects)
    if k == 0:
        return []
    indices = rng.choice_without_replacement(gt.num_objects, k)
    return [_click_for(gt, i) for i in indices]


@dataclass(frozen=True)
class SessionState:
    """Per-image evaluation state: which objects remain unclicked, clicks so far."""

    remaining: frozenset[int]
    issued: tuple[UserInput, ...] = ()

    @classmethod
    def for_image(cls, gt: LabeledImage) -> "SessionState":
        return cls(remaining=frozenset(range(gt.num_objects)))


def next_click(
    state: SessionState,
    gt: LabeledImage,
    rng: RandomSource,
    cfg: SimConfig = SimConfig(),
) -> tuple[UserInput | None, SessionState]:
    """Issue one more click without replacement, or None when exhausted.

    Exhausted means every object has been clicked already or the per-image
    click cap was reached; the state is returned unchanged in that case.
    """
    if not state.remaining or len(state.issued) >= cfg.eval_max_clicks:
        return None, state
    pool = sorted(state.remaining)
    index = pool[rng.integers(0, len(pool) - 1)]
    click = _click_for(gt, index)
    new_state = SessionState(
        remaining=state.remaining - {index},
        issued=state.issued + (click,),
    )
    return click, new_state


def draw_session_clicks(
    gt: LabeledImage, rng: RandomSource, cfg: SimConfig = SimConfig()
) -> list[UserInput]:
    """Draw an image's full click sequence for one session (up to the cap)."""
    state = SessionState.for_image(gt)
    clicks: list[UserInput] = []
    while True:
        click, state = next_click(state, gt, rng, cfg)
        if click is None:
            return clicks
        clicks.append(click)


__all__ = [
    "SimConfig",
    "SessionState",
    "sample_training_inputs",
    "next_click",
    "draw_session_clicks",
]
