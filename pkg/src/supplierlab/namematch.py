"""Supplier-name cleaning and within-importer deduplication.

Names are normalised (accents folded, upper case, punctuation dropped,
country and legal-form tokens removed), multinational aliases are mapped to
one canonical name, and the remaining names of each importer are linked when
their bigram similarity is high. Linked names form clusters via union-find.
"""
from __future__ import annotations

import math
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import pandas as pd

_DROP = re.compile(r"[.']")
_NON_ALNUM = re.compile(r"[^A-Z0-9 ]")
_SPACES = re.compile(r"\s+")


def read_list(path) -> list[str]:
    """Entries of a plain-text list, one per line; ``#`` starts a comment."""
    text = Path(path).read_text(encoding="utf-8")
    return [ln.split("#", 1)[0].strip() for ln in text.splitlines() if ln.split("#", 1)[0].strip()]


@lru_cache(maxsize=None)
def _packaged(name: str) -> tuple[str, ...]:
    return tuple(read_list(resources.files("supplierlab") / "data" / name))


def default_countries() -> tuple[str, ...]:
    return _packaged("countries.txt")


def default_suffixes() -> tuple[str, ...]:
    return _packaged("suffixes.txt")


def parse_aliases(lines) -> tuple[tuple[str, str], ...]:
    out = []
    for ln in lines:
        pattern, sep, canonical = ln.partition("=")
        if not sep or not pattern.strip() or not canonical.strip():
            raise ValueError(f"alias line {ln!r} is not PATTERN=CANONICAL")
        out.append((_basic(pattern), _basic(canonical)))
    return tuple(out)


def default_aliases() -> tuple[tuple[str, str], ...]:
    return parse_aliases(_packaged("aliases.txt"))


def read_aliases(path) -> tuple[tuple[str, str], ...]:
    return parse_aliases(read_list(path))


# --------------------------------------------------------------------------
# normalisation


def _basic(raw: str) -> str:
    folded = unicodedata.normalize("NFKD", str(raw))
    folded = "".join(ch for ch in folded if not unicodedata.combining(ch)).upper()
    folded = _NON_ALNUM.sub(" ", _DROP.sub("", folded))
    return _SPACES.sub(" ", folded).strip()


def _token_words(tokens) -> list[tuple[str, ...]]:
    words = {tuple(_basic(t).split()) for t in tokens}
    words.discard(())
    return sorted(words, key=lambda w: (-len(w), w))


def _remove_sequences(words: list[str], patterns: list[tuple[str, ...]]) -> list[str]:
    for pat in patterns:
        n = len(pat)
        i = 0
        while i + n <= len(words):
            if tuple(words[i:i + n]) == pat:
                del words[i:i + n]
            else:
                i += 1
    return words


def normalize_name(raw: str, countries=None, suffixes=None) -> str:
    """Upper-case, punctuation-free, single-spaced name without listed tokens.

    Dots and apostrophes are deleted (``S.A.`` becomes ``SA``); any other
    character outside ``A-Z0-9`` becomes a space. Country names and suffix
    tokens are removed as whole words until none is left.
    """
    countries = default_countries() if countries is None else countries
    suffixes = default_suffixes() if suffixes is None else suffixes
    patterns = _token_words(tuple(countries) + tuple(suffixes))
    words = _basic(raw).split()
    while True:
        before = len(words)
        words = _remove_sequences(words, patterns)
        if len(words) == before:
            return " ".join(words)


def canonicalize_multinational(normalized: str, aliases=None) -> str:
    """Canonical name of the first alias whose words occur in ``normalized``."""
    aliases = default_aliases() if aliases is None else aliases
    words = normalized.split()
    for pattern, canonical in aliases:
        pat = pattern.split()
        n = len(pat)
        if n and any(words[i:i + n] == pat for i in range(len(words) - n + 1)):
            return canonical
    return normalized


@dataclass
class NameRecord:
    raw: str
    normalized: str
    canonical: str | None = None
    cluster_id: int | None = None

    @property
    def empty(self) -> bool:
        return self.normalized == ""

    @classmethod
    def from_raw(cls, raw: str, countries=None, suffixes=None, aliases=None) -> "NameRecord":
        norm = normalize_name(raw, countries, suffixes)
        return cls(raw, norm, canonicalize_multinational(norm, aliases))


# --------------------------------------------------------------------------
# similarity


def bigram_multiset(normalized: str) -> Counter:
    s = normalized.replace(" ", "")
    return Counter(s[i:i + 2] for i in range(len(s) - 1))


@dataclass(frozen=True)
class SimilarityScore:
    simple: float
    logw: float

    def __post_init__(self):
        for v in (self.simple, self.logw):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"similarity {v} outside [0, 1]")


class BigramFrequencies:
    """Corpus bigram counts; ``weight(g) = ln(1 + N / freq(g))``."""

    def __init__(self, names=()):
        self.counts: Counter = Counter()
        for name in names:
            self.counts.update(bigram_multiset(name))
        self.total = sum(self.counts.values())

    def weight(self, gram: str) -> float:
        return math.log1p(self.total / max(self.counts.get(gram, 0), 1))


def _dice(a: Counter, b: Counter, weight) -> float:
    common = a & b
    num = 2.0 * math.fsum(weight(g) * n for g, n in sorted(common.items()))
    den = math.fsum(weight(g) * n for g, n in sorted(a.items())) + math.fsum(weight(g) * n for g, n in sorted(b.items()))
    return min(num / den, 1.0) if den > 0 else 0.0


def similscore(a: str, b: str, freqs: BigramFrequencies | None = None) -> SimilarityScore:
    """Multiset Dice overlap of the two names' bigrams, unweighted and log-weighted.

    Without ``freqs`` the two names themselves serve as the corpus.
    """
    A, B = bigram_multiset(a), bigram_multiset(b)
    if not A or not B:
        return SimilarityScore(0.0, 0.0)
    freqs = freqs if freqs is not None else BigramFrequencies((a, b))
    return SimilarityScore(_dice(A, B, lambda g: 1.0), _dice(A, B, freqs.weight))


@dataclass(frozen=True)
class Thresholds:
    both: float = 0.65
    strong: float = 0.8
    weak: float = 0.35


def high_similarity(score: SimilarityScore, thresholds: Thresholds = Thresholds()) -> bool:
    """Both scores above ``both``, or one above ``strong`` and the other above ``weak``."""
    lo, hi = sorted((score.simple, score.logw))
    return (lo > thresholds.both) or (hi > thresholds.strong and lo > thresholds.weak)


# --------------------------------------------------------------------------
# clustering


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def dedup_suppliers(
    records: pd.DataFrame,
    importer_names: dict | None = None,
    aliases=None,
    countries=None,
    suffixes=None,
    thresholds: Thresholds = Thresholds(),
) -> pd.DataFrame:
    """Cluster the supplier names of each importer.

    ``records`` has columns firm_id, supplier_raw, value_usd. A supplier name
    similar to its importer's own name (``importer_names``, defaulting to the
    firm id) takes the importer's name. Within each importer, similar names
    are linked and connected components become clusters whose canonical name
    is the member with the largest total import value (ties: alphabetical).
    The output adds supplier_canonical and cluster_id and keeps input order;
    it does not depend on that order.
    """
    df = records[["firm_id", "supplier_raw", "value_usd"]].copy()
    df["supplier_raw"] = df["supplier_raw"].fillna("").astype(str)
    raws = sorted(df["supplier_raw"].unique())
    norm = {r: canonicalize_multinational(normalize_name(r, countries, suffixes), aliases) for r in raws}
    df["name"] = df["supplier_raw"].map(norm)

    importer_names = importer_names or {}
    importer_norm = {
        f: normalize_name(importer_names.get(f, f), countries, suffixes) for f in sorted(df["firm_id"].unique())
    }
    freqs = BigramFrequencies(sorted(set(norm.values())) + sorted(set(importer_norm.values())))

    def same(a, b):
        return high_similarity(similscore(a, b, freqs), thresholds)

    inherit = {}
    for (firm, name) in sorted(set(zip(df["firm_id"], df["name"]))):
        imp = importer_norm[firm]
        inherit[(firm, name)] = imp if imp and name != imp and same(name, imp) else name
    df["name"] = [inherit[k] for k in zip(df["firm_id"], df["name"])]

    values = {k: math.fsum(sorted(g.tolist())) for k, g in df.groupby(["firm_id", "name"], sort=True)["value_usd"]}
    canon_of = {}
    for firm in sorted(importer_norm):
        names = sorted(n for (f, n) in values if f == firm)
        uf = UnionFind(len(names))
        for i in range(len(names)):
            for j in range(i + 1, len(names)):
                if same(names[i], names[j]):
                    uf.union(i, j)
        groups: dict[int, list[str]] = {}
        for i, n in enumerate(names):
            groups.setdefault(uf.find(i), []).append(n)
        for members in groups.values():
            best = min(members, key=lambda n: (-values[(firm, n)], n))
            for n in members:
                canon_of[(firm, n)] = best
    df["supplier_canonical"] = [canon_of[k] for k in zip(df["firm_id"], df["name"])]
    ids = {k: i for i, k in enumerate(sorted(set(zip(df["firm_id"], df["supplier_canonical"]))))}
    df["cluster_id"] = [ids[k] for k in zip(df["firm_id"], df["supplier_canonical"])]
    return df[["firm_id", "supplier_raw", "supplier_canonical", "cluster_id"]]
