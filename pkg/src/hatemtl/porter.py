"""Porter suffix-stripping stemmer.

Implements the classic five-step suffix stripping algorithm in the form
maintained by its author (including the widely adopted 'bli'->'ble' and
'logi'->'log' adjustments), which is what the published reference
vocabulary/output pairs correspond to. Input is expected lowercase;
words of length <= 2 are returned unchanged.
"""

from __future__ import annotations

_VOWELS = "aeiou"


class _Word:
    """Mutable stemming buffer: the word in ``b[0..k]``."""

    __slots__ = ("b", "k", "j")

    def __init__(self, word: str):
        self.b = word
        self.k = len(word) - 1
        self.j = 0

    def cons(self, i: int) -> bool:
        ch = self.b[i]
        if ch in _VOWELS:
            return False
        if ch == "y":
            return i == 0 or not self.cons(i - 1)
        return True

    def m(self) -> int:
        """Count consonant-vowel sequences [C](VC)^m[V] in b[0..j]."""
        i = 0
        while i <= self.j and self.cons(i):
            i += 1
        n = 0
        while True:
            while i <= self.j and not self.cons(i):
                i += 1
            if i > self.j:
                return n
            n += 1
            while i <= self.j and self.cons(i):
                i += 1
            if i > self.j:
                return n

    def vowel_in_stem(self) -> bool:
        return any(not self.cons(i) for i in range(self.j + 1))

    def double_cons(self, i: int) -> bool:
        return i > 0 and self.b[i] == self.b[i - 1] and self.cons(i)

    def cvc(self, i: int) -> bool:
        # consonant-vowel-consonant ending where the final consonant is
        # not w, x or y; used to restore a trailing -e on short stems.
        if i < 2 or not self.cons(i) or self.cons(i - 1) or not self.cons(i - 2):
            return False
        return self.b[i] not in "wxy"

    def ends(self, suffix: str) -> bool:
        length = len(suffix)
        if suffix[-1] != self.b[self.k] or length > self.k + 1:
            return False
        if self.b[self.k - length + 1 : self.k + 1] != suffix:
            return False
        self.j = self.k - length
        return True

    def set_to(self, s: str) -> None:
        self.b = self.b[: self.j + 1] + s
        self.k = len(self.b) - 1

    def replace_if_m(self, s: str) -> None:
        if self.m() > 0:
            self.set_to(s)


def _step1ab(w: _Word) -> None:
    # plurals and -ed / -ing
    if w.b[w.k] == "s":
        if w.ends("sses"):
            w.k -= 2
        elif w.ends("ies"):
            w.set_to("i")
        elif w.b[w.k - 1] != "s":
            w.k -= 1
    if w.ends("eed"):
        if w.m() > 0:
            w.k -= 1
    elif (w.ends("ed") or w.ends("ing")) and w.vowel_in_stem():
        w.k = w.j
        if w.ends("at"):
            w.set_to("ate")
        elif w.ends("bl"):
            w.set_to("ble")
        elif w.ends("iz"):
            w.set_to("ize")
        elif w.double_cons(w.k):
            if w.b[w.k - 1] not in "lsz":
                w.k -= 1
        elif w.m() == 1 and w.cvc(w.k):
            w.set_to("e")


def _step1c(w: _Word) -> None:
    # terminal y -> i when the stem has another vowel
    if w.ends("y") and w.vowel_in_stem():
        w.b = w.b[: w.k] + "i"


_STEP2_RULES = {
    "a": (("ational", "ate"), ("tional", "tion")),
    "c": (("enci", "ence"), ("anci", "ance")),
    "e": (("izer", "ize"),),
    "l": (("bli", "ble"), ("alli", "al"), ("entli", "ent"), ("eli", "e"),
          ("ousli", "ous")),
    "o": (("ization", "ize"), ("ation", "ate"), ("ator", "ate")),
    "s": (("alism", "al"), ("iveness", "ive"), ("fulness", "ful"),
          ("ousness", "ous")),
    "t": (("aliti", "al"), ("iviti", "ive"), ("biliti", "ble")),
    "g": (("logi", "log"),),
}

_STEP3_RULES = {
    "e": (("icate", "ic"), ("ative", ""), ("alize", "al")),
    "i": (("iciti", "ic"),),
    "l": (("ical", "ic"), ("ful", "")),
    "s": (("ness", ""),),
}


def _step2(w: _Word) -> None:
    # collapse double suffixes (-ization -> -ize etc.) when m > 0
    for suffix, repl in _STEP2_RULES.get(w.b[w.k - 1], ()):
        if w.ends(suffix):
            w.replace_if_m(repl)
            return


def _step3(w: _Word) -> None:
    for suffix, repl in _STEP3_RULES.get(w.b[w.k], ()):
        if w.ends(suffix):
            w.replace_if_m(repl)
            return


_STEP4_SUFFIXES = {
    "a": ("al",),
    "c": ("ance", "ence"),
    "e": ("er",),
    "i": ("ic",),
    "l": ("able", "ible"),
    "n": ("ant", "ement", "ment", "ent"),
    "s": ("ism",),
    "t": ("ate", "iti"),
    "u": ("ous",),
    "v": ("ive",),
    "z": ("ize",),
}


def _step4(w: _Word) -> None:
    # strip -ant, -ence etc. in context <c>vcvc<v>
    ch = w.b[w.k - 1]
    if ch == "o":
        if not ((w.ends("ion") and w.b[w.j] in "st") or w.ends("ou")):
            return
    else:
        for suffix in _STEP4_SUFFIXES.get(ch, ()):
            if w.ends(suffix):
                break
        else:
            return
    if w.m() > 1:
        w.k = w.j


def _step5(w: _Word) -> None:
    # drop final -e when m > 1, and -ll -> -l when m > 1
    w.j = w.k
    if w.b[w.k] == "e":
        a = w.m()
        if a > 1 or (a == 1 and not w.cvc(w.k - 1)):
            w.k -= 1
    if w.b[w.k] == "l" and w.double_cons(w.k) and w.m() > 1:
        w.k -= 1


def stem(word: str) -> str:
    """Stem one lowercase word; strings of length <= 2 pass through."""
    if len(word) <= 2:
        return word
    w = _Word(word)
    _step1ab(w)
    _step1c(w)
    _step2(w)
    _step3(w)
    _step4(w)
    _step5(w)
    return w.b[: w.k + 1]
