"""Polynomial feature libraries over the gesture state.

A library is an ordered set of monomial terms in the state variables
(x,) or (x, x'). Terms are kept in graded lexicographic order: the
constant first, then ascending total degree, ties broken so that
powers of x precede powers of x'. Term names follow the convention
``1``, ``x``, ``x^2``, ``x'``, ``x'^3``, with products space-joined
(``x x'``).
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidStateError

__all__ = [
    "Term",
    "FeatureLibrary",
    "polynomial_library",
    "custom_library",
    "parse_term",
    "evaluate",
    "exponent_matrix",
]

STATE_NAMES = ("x", "x'")


@dataclass(frozen=True)
class Term:
    """One monomial, stored as per-state-variable exponents."""

    exponents: tuple

    def __post_init__(self):
        exps = tuple(int(e) for e in self.exponents)
        if len(exps) not in (1, 2):
            raise ValueError(f"term arity must be 1 or 2, got {len(exps)}")
        if any(e < 0 for e in exps):
            raise ValueError(f"exponents must be nonnegative, got {exps}")
        object.__setattr__(self, "exponents", exps)

    @property
    def arity(self):
        return len(self.exponents)

    @property
    def degree(self):
        return sum(self.exponents)

    @property
    def kind(self):
        return "constant" if self.degree == 0 else "monomial"

    @property
    def name(self):
        if self.degree == 0:
            return "1"
        parts = []
        for var, e in zip(STATE_NAMES, self.exponents):
            if e == 1:
                parts.append(var)
            elif e > 1:
                parts.append(f"{var}^{e}")
        return " ".join(parts)

    def _sort_key(self):
        return (self.degree, tuple(-e for e in self.exponents))


def parse_term(text, arity=2):
    """Parse a term name like ``x^3``, ``x'``, ``1`` or ``x x'``."""
    text = text.strip()
    if not text:
        raise ValueError("empty term name")
    exps = [0] * arity
    if text == "1":
        return Term(tuple(exps))
    for part in text.replace("*", " ").split():
        if "^" in part:
            var, _, power = part.partition("^")
            try:
                e = int(power)
            except ValueError:
                raise ValueError(f"bad exponent in term {text!r}") from None
        else:
            var, e = part, 1
        if var not in STATE_NAMES[:arity]:
            raise ValueError(f"unknown state variable {var!r} in term {text!r}")
        if e < 1:
            raise ValueError(f"exponent must be >= 1 in term {text!r}")
        idx = STATE_NAMES.index(var)
        if exps[idx] != 0:
            raise ValueError(f"repeated variable in term {text!r}")
        exps[idx] = e
    return Term(tuple(exps))


@dataclass(frozen=True)
class FeatureLibrary:
    """An ordered, duplicate-free tuple of terms of one arity."""

    terms: tuple
    arity: int

    def __post_init__(self):
        terms = tuple(self.terms)
        for term in terms:
            if not isinstance(term, Term):
                raise TypeError(f"expected Term, got {term!r}")
            if term.arity != self.arity:
                raise ValueError(
                    f"term {term.name!r} has arity {term.arity}, library is {self.arity}"
                )
        if len({t.exponents for t in terms}) != len(terms):
            raise ValueError("duplicate terms in library")
        object.__setattr__(self, "terms", terms)

    @property
    def names(self):
        return tuple(t.name for t in self.terms)

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)


def polynomial_library(degree, arity=2):
    """All monomials of total degree <= degree, constant included.

    degree must be between 1 and 4. For arity 2 and degree 2 this is
    {1, x, x', x^2, x x', x'^2}.
    """
    if not isinstance(degree, int) or not 1 <= degree <= 4:
        raise ValueError(f"degree must be an integer in 1..4, got {degree!r}")
    if arity not in (1, 2):
        raise ValueError(f"arity must be 1 or 2, got {arity!r}")
    if arity == 1:
        exps = [(e,) for e in range(degree + 1)]
    else:
        exps = [
            (i, j)
            for i in range(degree + 1)
            for j in range(degree + 1 - i)
        ]
    terms = sorted((Term(e) for e in exps), key=Term._sort_key)
    return FeatureLibrary(terms=tuple(terms), arity=arity)


def custom_library(terms, arity=2):
    """Library from explicit terms (Term objects or names); canonically sorted."""
    parsed = []
    for term in terms:
        if isinstance(term, Term):
            parsed.append(term)
        else:
            parsed.append(parse_term(term, arity=arity))
    parsed.sort(key=Term._sort_key)
    return FeatureLibrary(terms=tuple(parsed), arity=arity)


def exponent_matrix(library):
    """(n_terms, arity) integer exponent matrix, row per term."""
    return np.array([t.exponents for t in library.terms], dtype=np.int64).reshape(
        len(library), library.arity
    )


def evaluate(library, states):
    """Design matrix of the library at the given states.

    states is (n, arity) (a 1-D array is accepted for arity 1). Rows
    with non-finite values raise InvalidStateError naming the row. An
    empty input yields a (0, n_terms) matrix.
    """
    S = np.asarray(states, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    if S.ndim != 2 or S.shape[1] != library.arity:
        raise ValueError(
            f"states must be (n, {library.arity}), got shape {S.shape}"
        )
    bad = ~np.isfinite(S)
    if bad.any():
        row = int(np.nonzero(bad.any(axis=1))[0][0])
        raise InvalidStateError(f"non-finite state at row {row}")
    E = exponent_matrix(library)
    return np.prod(S[:, None, :] ** E[None, :, :], axis=2)
