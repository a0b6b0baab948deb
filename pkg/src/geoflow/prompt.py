"""View-condition prompt strings and a deterministic hashed text embedder.

The embedder is a stand-in for a pretrained text encoder: it only has to be
stable and to separate prompts that differ in their domain word.
"""
import hashlib
import itertools
import re
from dataclasses import dataclass

import numpy as np

from .errors import EmptyClassList

DOMAINS = ("car", "drone")
TEMPLATE = "{classes} captured from the [domain] view"
MIN_DIM = 8
MAX_SUBSET_CLASSES = 8

_TOKEN_RE = re.compile(r"[^\s,]+")


@dataclass(frozen=True)
class PromptSpec:
    """Ordered class list, camera domain and a template with a ``[domain]`` slot."""

    classes: tuple
    domain: str
    template: str = TEMPLATE

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if not self.classes:
            raise EmptyClassList("a prompt needs at least one class")
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        if "[domain]" not in self.template:
            raise ValueError("template has no [domain] slot")


def build_prompt(spec):
    """``"c1, c2, ..., cK captured from the <domain> view"``."""
    if not spec.classes:
        raise EmptyClassList("a prompt needs at least one class")
    text = spec.template.replace("[domain]", spec.domain)
    return text.replace("{classes}", ", ".join(spec.classes))


def tokenize(text):
    return _TOKEN_RE.findall(text.lower())


def _hash(token, salt):
    digest = hashlib.blake2b(f"{salt}\x00{token}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def embed_prompt(text, dim=64):
    """Unit-norm token-hash embedding of ``text``.

    Each token adds a signed unit to one hashed bucket (a bag of words). A
    second term adds the token again at a position-dependent bucket with
    weight ``1 / (1 + position)``, so word order matters.
    """
    if dim < MIN_DIM:
        raise ValueError(f"embedding dimension must be >= {MIN_DIM}, got {dim}")
    vec = np.zeros(dim)
    for pos, tok in enumerate(tokenize(text)):
        h = _hash(tok, "bag")
        vec[h % dim] += 1.0 if (h >> 32) & 1 else -1.0
        h = _hash(f"{pos}:{tok}", "pos")
        vec[h % dim] += (1.0 if (h >> 32) & 1 else -1.0) / (1.0 + pos)
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        # every contribution cancelled (or no tokens); fall back to a fixed axis
        vec[_hash(text, "empty") % dim] = 1.0
        return vec
    return vec / norm


def class_subsets(classes):
    """Class lists used to span a domain's prompt subspace.

    All non-empty subsets (in the given order) for up to 8 classes,
    otherwise every single class plus the full list.
    """
    classes = tuple(classes)
    if not classes:
        raise EmptyClassList("a prompt needs at least one class")
    if len(classes) <= MAX_SUBSET_CLASSES:
        return [sub for k in range(1, len(classes) + 1) for sub in itertools.combinations(classes, k)]
    return [(c,) for c in classes] + [classes]


def domain_prompt_matrix(classes, domain, dim=64):
    """Embeddings (one row per prompt) of every class subset for one domain."""
    return np.stack([embed_prompt(build_prompt(PromptSpec(sub, domain)), dim) for sub in class_subsets(classes)])


def view_prompts(classes, dim=64):
    """Prompt bundle for training: full-list embeddings and per-domain matrices.

    Source is the car view and target the drone view.
    """
    return {
        "source": embed_prompt(build_prompt(PromptSpec(classes, "car")), dim),
        "target": embed_prompt(build_prompt(PromptSpec(classes, "drone")), dim),
        "source_all": domain_prompt_matrix(classes, "car", dim),
        "target_all": domain_prompt_matrix(classes, "drone", dim),
    }
