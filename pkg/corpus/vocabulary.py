"""Closed word vocabulary for the synthetic corpus."""
import re

from motionflow.exceptions import TokenizationError

PAD = '<pad>'
NULL = '<null>'
PAD_ID = 0
NULL_ID = 1
SPECIALS = (PAD, NULL)

_PUNCTUATION = re.compile(r"[.,!?;:]")


def normalize(text):
    """Lowercase, drop punctuation and collapse whitespace."""
    return ' '.join(_PUNCTUATION.sub(' ', text.lower()).split())


class Vocabulary:
    """Word <-> id table. Ids 0 and 1 are reserved for padding and the null condition."""

    def __init__(self, words):
        words = [w for w in words if w not in SPECIALS]
        if len(set(words)) != len(words):
            raise ValueError('vocabulary words must be unique')
        self.words = list(SPECIALS) + list(words)
        self._ids = {word: i for i, word in enumerate(self.words)}

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self._ids

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.words == other.words

    def encode(self, text):
        """Whitespace-tokenize normalized text; an empty text is the null condition."""
        words = normalize(text).split()
        if not words:
            return [NULL_ID]
        missing = [w for w in words if w not in self._ids]
        if missing:
            raise TokenizationError(f'words not in vocabulary: {", ".join(sorted(set(missing)))}')
        return [self._ids[w] for w in words]

    def decode(self, ids):
        words = []
        for i in ids:
            i = int(i)
            if i == PAD_ID or i == NULL_ID:
                continue
            try:
                words.append(self.words[i])
            except IndexError:
                raise TokenizationError(f'token id {i} is outside the vocabulary') from None
        return ' '.join(words)

    def pad(self, rows, length=None):
        """Right-pad token rows to a common length."""
        length = length or max(len(row) for row in rows)
        return [list(row[:length]) + [PAD_ID] * (length - len(row[:length])) for row in rows]

    def to_list(self):
        return list(self.words)

    @classmethod
    def from_list(cls, words):
        if list(words[:len(SPECIALS)]) != list(SPECIALS):
            raise TokenizationError('stored vocabulary does not start with the reserved tokens')
        return cls(words[len(SPECIALS):])


def build_vocabulary(texts):
    """Vocabulary over every word of `texts`, sorted."""
    words = sorted({w for text in texts for w in normalize(text).split()})
    return Vocabulary(words)
