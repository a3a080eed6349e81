"""Synthetic corpora used by the training/acceptance tests.

Both corpora put every discriminative word into the descriptions, since the
shared vocabulary is built from the description side only.
"""

from logcad.data import Entry

PHRASES = [("blue", "falcon"), ("red", "lantern"), ("iron", "gate"), ("silver", "fox"),
           ("green", "meadow"), ("black", "anvil"), ("gold", "ribbon"), ("white", "cliff")]
CUES = ["harbor", "desert", "winter", "market"]
NAMES = {p: f"kind{i}" for i, p in enumerate(PHRASES)}

# contexts place the cue word at different positions per template
TRAIN_TEMPLATES = [
    lambda cue: ["the", "[TRG]", "near", "the", cue, "was", "seen", "."],
    lambda cue: ["at", "the", cue, "a", "[TRG]", "appeared", "."],
    lambda cue: ["people", "saw", "a", "[TRG]", "by", "the", cue, "yesterday", "."],
]
HELDOUT_TEMPLATE = lambda cue: ["near", "a", cue, "someone", "found", "the", "[TRG]", "."]  # noqa: E731


def _entries_for(template):
    out = []
    for p in PHRASES:
        for cue in CUES:
            ctx = template(cue)
            span = ctx.index("[TRG]")
            out.append(Entry(list(p), ctx, (span, span),
                             ["a", cue, NAMES[p], "of", "note"]))
    return out


def overfit_corpus():
    """32 entries; the description depends on the phrase and on a context
    cue word, one context template."""
    return _entries_for(TRAIN_TEMPLATES[0])


def directional_corpus():
    """(train, test): 96 training entries over three context templates and
    32 test entries on a held-out template. The correct description depends
    jointly on the local cue token and the target identity, so a model that
    cannot read the local context cannot predict the cue word."""
    train = [e for t in TRAIN_TEMPLATES for e in _entries_for(t)]
    test = _entries_for(HELDOUT_TEMPLATE)
    return train, test
