"""Word-level tokenizers for the tiny backbones."""
from __future__ import annotations

import json
import re
from collections import Counter
from typing import Iterable

_TOKEN = re.compile(r"<\*>|\w+|[^\w\s]")
_NO_SPACE_BEFORE = set(".,:;!?)]}")


def split_words(text: str) -> list:
    return _TOKEN.findall(text)


class WordTokenizer:
    """Maps whitespace/punctuation-delimited tokens to ids; unknown words -> ``[UNK]``.

    ``specials`` always occupy the first ids in the given order.
    """

    def __init__(self, vocab, specials=("[PAD]", "[UNK]"), lowercase=False):
        self.specials = tuple(specials)
        self.lowercase = lowercase
        words = list(self.specials) + [w for w in vocab if w not in self.specials]
        self.itos = words
        self.stoi = {w: i for i, w in enumerate(words)}
        self.unk_id = self.stoi["[UNK]"]
        self.pad_id = self.stoi["[PAD]"]
        self._cache: dict = {}

    def __len__(self):
        return len(self.itos)

    @classmethod
    def build(cls, texts: Iterable[str], specials=("[PAD]", "[UNK]"), lowercase=False,
              max_size=None, extra=()):
        counts = Counter()
        for t in texts:
            counts.update(split_words(t.lower() if lowercase else t))
        words = [w.lower() if lowercase else w for e in extra for w in split_words(e)]
        seen = set(words)
        budget = None if max_size is None else max(0, max_size - len(specials) - len(seen))
        # most_common is stable for ties (first-seen order), so this is deterministic.
        for w, _ in counts.most_common(budget):
            if w not in seen:
                words.append(w)
                seen.add(w)
        return cls(words, specials=specials, lowercase=lowercase)

    def encode(self, text: str) -> list:
        ids = self._cache.get(text)
        if ids is None:
            src = text.lower() if self.lowercase else text
            ids = [self.stoi.get(w, self.unk_id) for w in split_words(src)]
            if len(self._cache) < 200_000:
                self._cache[text] = ids
        return list(ids)

    def decode(self, ids) -> str:
        out = ""
        for i in ids:
            w = self.itos[i] if 0 <= i < len(self.itos) else "[UNK]"
            if w in self.specials:
                continue
            if out and w not in _NO_SPACE_BEFORE:
                out += " "
            out += w
        return out

    def token_id(self, word: str) -> int:
        return self.stoi[word]

    def to_dict(self) -> dict:
        return {"itos": self.itos, "specials": list(self.specials), "lowercase": self.lowercase}

    @classmethod
    def from_dict(cls, d: dict) -> "WordTokenizer":
        return cls(d["itos"], specials=d["specials"], lowercase=d["lowercase"])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "WordTokenizer":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
