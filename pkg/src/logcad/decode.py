"""Greedy and beam-search description generation.

Works against the step interface of :class:`logcad.model.DescriptionModel`
(``start_session(entry)`` / ``step(session, prev_id)``); anything exposing
that protocol plus a ``vocab`` decodes the same way.

Scores are summed token log-probabilities; hypotheses are compared after
normalizing by token count. [PAD] and <bos> are never emitted, and tokens
with non-finite log-probability are never selected. The beam always retains
the greedy continuation, so beam search never returns a hypothesis scoring
below greedy decoding under the same normalization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from logcad.data import Vocab

DEFAULT_MAX_LEN = 30


@dataclass
class Hypothesis:
    """Partial decode: emitted token ids (<eos> kept when finished),
    cumulative log-probability, the decoder session, and a finished flag."""

    token_ids: list
    logprob: float
    session: object
    finished: bool

    @property
    def score(self) -> float:
        return self.logprob / max(len(self.token_ids), 1)

    @property
    def output_ids(self) -> list:
        if self.finished and self.token_ids and self.token_ids[-1] == Vocab.EOS:
            return self.token_ids[:-1]
        return list(self.token_ids)


def _masked(logp: np.ndarray) -> np.ndarray:
    out = logp.astype(np.float64, copy=True)
    out[Vocab.PAD] = -np.inf
    out[Vocab.BOS] = -np.inf
    return out


def _prev(hyp: Hypothesis) -> Optional[int]:
    return hyp.token_ids[-1] if hyp.token_ids else None


def _greedy_hyp(model, entry, max_len: int) -> Hypothesis:
    hyp = Hypothesis([], 0.0, model.start_session(entry), False)
    for _ in range(max_len):
        logp, session = model.step(hyp.session, _prev(hyp))
        logp = _masked(logp)
        nxt = int(np.argmax(logp))
        if not np.isfinite(logp[nxt]):
            break
        hyp = Hypothesis(hyp.token_ids + [nxt], hyp.logprob + float(logp[nxt]),
                         session, nxt == Vocab.EOS)
        if hyp.finished:
            break
    return hyp


def greedy_decode(model, entry, max_len: int = DEFAULT_MAX_LEN) -> list:
    """Emit the argmax token at each step until <eos> or ``max_len``."""
    if max_len < 1:
        raise ValueError("greedy_decode: max_len must be >= 1")
    return _greedy_hyp(model, entry, max_len).output_ids


def _beam_hyps(model, entry, beam: int, max_len: int) -> Hypothesis:
    start = Hypothesis([], 0.0, model.start_session(entry), False)
    live = [start]
    greedy_path: Optional[Hypothesis] = start
    finished: list[Hypothesis] = []

    for _ in range(max_len):
        candidates: list[Hypothesis] = []
        greedy_next: Optional[Hypothesis] = None
        for hyp in live:
            logp, session = model.step(hyp.session, _prev(hyp))
            logp = _masked(logp)
            order = np.argsort(-logp, kind="stable")[:beam]
            track_greedy = hyp is greedy_path
            for rank, tok in enumerate(order):
                tok = int(tok)
                if not np.isfinite(logp[tok]):
                    continue
                child = Hypothesis(hyp.token_ids + [tok], hyp.logprob + float(logp[tok]),
                                   session, tok == Vocab.EOS)
                if child.finished:
                    finished.append(child)
                else:
                    candidates.append(child)
                if track_greedy and rank == 0:
                    greedy_next = child
        candidates.sort(key=lambda h: -h.logprob)
        live = candidates[:beam]
        greedy_path = None
        if greedy_next is not None and not greedy_next.finished:
            if all(g is not greedy_next for g in live):
                live.append(greedy_next)
            greedy_path = greedy_next
        if not live:
            break

    pool = finished if finished else live
    if not pool:
        return start
    best = max(pool, key=lambda h: h.score)
    # the greedy continuation competes in the final selection, so the result
    # never scores below greedy decoding
    if greedy_path is not None and greedy_path.score > best.score:
        best = greedy_path
    return best


def beam_search(model, entry, beam: int = 5, max_len: int = DEFAULT_MAX_LEN) -> list:
    """Beam search over summed log-probabilities; returns the best finished
    hypothesis by length-normalized score (or the best unfinished one when
    nothing finished within ``max_len``)."""
    if beam < 1:
        raise ValueError("beam_search: beam must be >= 1")
    if max_len < 1:
        raise ValueError("beam_search: max_len must be >= 1")
    return _beam_hyps(model, entry, beam, max_len).output_ids
