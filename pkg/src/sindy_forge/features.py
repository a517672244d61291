"""Candidate function libraries and their evaluation.

Every non-custom basis function is a product of factors ``g(v_c) ** p`` where
``v`` is the concatenated (state, input) vector and ``g`` is the identity,
the absolute value or a clamped square root ``sqrt(clip(v, lo, hi))``.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DataError, ParameterError

ID, ABS, SQRT = "id", "abs", "sqrt"
_TRANSFORM_CODE = {ID: 0, ABS: 1, SQRT: 2}


@dataclass(frozen=True)
class Factor:
    channel: int
    transform: str = ID
    power: int = 1
    lo: float = 0.0
    hi: float = math.inf

    def __post_init__(self):
        if self.transform not in _TRANSFORM_CODE:
            raise ParameterError(f"unknown transform {self.transform!r}")
        if self.power < 1:
            raise ParameterError("factor power must be >= 1")
        if self.transform == SQRT and not (0 <= self.lo <= self.hi):
            raise ParameterError(f"sqrt guard needs 0 <= lo <= hi, got ({self.lo}, {self.hi})")

    def label(self, names: Sequence[str]) -> str:
        c = names[self.channel]
        base = {ID: c, ABS: f"|{c}|", SQRT: f"sqrt({c})"}[self.transform]
        return base if self.power == 1 else f"{base}^{self.power}"


@dataclass(frozen=True, eq=False)
class BasisFunction:
    name: str
    kind: str  # constant | monomial | abs_product | sqrt | custom
    factors: tuple[Factor, ...] = ()
    func: Callable[[np.ndarray], np.ndarray] | None = None

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(sorted({f.channel for f in self.factors}))

    @property
    def degree(self) -> int:
        return sum(f.power for f in self.factors)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        """Evaluate on rows of the concatenated (state, input) matrix."""
        v = np.atleast_2d(np.asarray(v, dtype=float))
        if self.func is not None:
            return np.asarray(self.func(v), dtype=float).reshape(v.shape[0])
        out = np.ones(v.shape[0])
        for f in self.factors:
            col = v[:, f.channel]
            if f.transform == ABS:
                col = np.abs(col)
            elif f.transform == SQRT:
                col = np.sqrt(np.clip(col, f.lo, f.hi))
            out = out * col**f.power
        return out


def _kind_of(factors: Sequence[Factor]) -> str:
    if not factors:
        return "constant"
    transforms = {f.transform for f in factors}
    if SQRT in transforms:
        return "sqrt"
    if ABS in transforms:
        return "abs_product"
    return "monomial"


def make_term(factors: Sequence[Factor], names: Sequence[str]) -> BasisFunction:
    factors = tuple(sorted(factors, key=lambda f: (f.channel, _TRANSFORM_CODE[f.transform])))
    name = "*".join(f.label(names) for f in factors) if factors else "1"
    return BasisFunction(name=name, kind=_kind_of(factors), factors=factors)


def custom_term(name: str, func: Callable[[np.ndarray], np.ndarray], channels=()) -> BasisFunction:
    """Wrap an arbitrary vectorized callable ``func(V) -> (T,)``.

    Custom terms cannot be compiled into the simulation kernels or serialized.
    """
    return BasisFunction(name=name, kind="custom", factors=tuple(Factor(c) for c in channels), func=func)


@dataclass(frozen=True, eq=False)
class FeatureLibrary:
    basis: tuple[BasisFunction, ...]
    n: int
    m: int
    channel_names: tuple[str, ...]
    spec: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "basis", tuple(self.basis))
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        if len(self.channel_names) != self.n + self.m:
            raise ParameterError("need one channel name per state and input")
        names = [b.name for b in self.basis]
        if len(set(names)) != len(names):
            dup = sorted({x for x in names if names.count(x) > 1})
            raise ParameterError(f"duplicate basis names: {dup}")
        for b in self.basis:
            if any(not 0 <= f.channel < self.n + self.m for f in b.factors):
                raise ParameterError(f"basis {b.name!r} references a channel outside 0..{self.n + self.m - 1}")

    def __len__(self):
        return len(self.basis)

    @property
    def names(self) -> list[str]:
        return [b.name for b in self.basis]

    @property
    def has_custom(self) -> bool:
        return any(b.func is not None for b in self.basis)

    def index(self, name: str) -> int:
        for i, b in enumerate(self.basis):
            if b.name == name:
                return i
        raise KeyError(name)

    def remap(self, channel_map: Sequence[int], n: int, m: int, channel_names: Sequence[str]) -> "FeatureLibrary":
        """Re-express the library over a new channel layout.

        ``channel_map[old] = new`` channel index. Custom terms are not remappable.
        """
        terms = []
        for b in self.basis:
            if b.func is not None:
                raise ParameterError(f"cannot remap custom basis {b.name!r}")
            facs = [Factor(channel_map[f.channel], f.transform, f.power, f.lo, f.hi) for f in b.factors]
            terms.append(make_term(facs, channel_names))
        return FeatureLibrary(tuple(terms), n, m, tuple(channel_names))

    def extend(self, terms: Sequence[BasisFunction]) -> "FeatureLibrary":
        """Append terms whose names are not already present."""
        have = set(self.names)
        extra = [t for t in terms if t.name not in have]
        return FeatureLibrary(self.basis + tuple(extra), self.n, self.m, self.channel_names, self.spec)

    def table(self):
        """Flat arrays describing the factors, consumed by the compiled kernels."""
        if self.has_custom:
            raise ParameterError("libraries with custom terms have no kernel table")
        K = len(self.basis)
        F = max([len(b.factors) for b in self.basis] + [1])
        nfac = np.zeros(K, dtype=np.int64)
        ch = np.zeros((K, F), dtype=np.int64)
        tr = np.zeros((K, F), dtype=np.int64)
        pw = np.zeros((K, F), dtype=np.int64)
        lo = np.zeros((K, F))
        hi = np.full((K, F), np.inf)
        for k, b in enumerate(self.basis):
            nfac[k] = len(b.factors)
            for j, f in enumerate(b.factors):
                ch[k, j] = f.channel
                tr[k, j] = _TRANSFORM_CODE[f.transform]
                pw[k, j] = f.power
                lo[k, j] = f.lo
                hi[k, j] = f.hi
        return nfac, ch, tr, pw, lo, hi

    def to_dict(self) -> dict:
        """Explicit term list; round-trips through :func:`library_from_dict`."""
        if self.has_custom:
            raise ParameterError("libraries with custom terms cannot be serialized")
        terms = []
        for b in self.basis:
            guards = {
                self.channel_names[f.channel]: [f.lo, f.hi if math.isfinite(f.hi) else None]
                for f in b.factors
                if f.transform == SQRT
            }
            terms.append({"name": b.name, "guard": guards} if guards else {"name": b.name})
        return {
            "spec": self.spec,
            "n": self.n,
            "m": self.m,
            "channels": list(self.channel_names),
            "terms": terms,
        }


def _default_names(n: int, m: int) -> list[str]:
    return [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(m)]


def polynomial_library(n: int, m: int, degree: int, names: Sequence[str] | None = None, include_constant: bool = True) -> FeatureLibrary:
    """All monomials of total degree 1..degree (plus the constant) in grlex order."""
    if degree < 1:
        raise ParameterError("polynomial degree must be >= 1")
    names = list(names) if names is not None else _default_names(n, m)
    terms = [make_term((), names)] if include_constant else []
    for d in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(n + m), d):
            facs = [Factor(c, ID, combo.count(c)) for c in sorted(set(combo))]
            terms.append(make_term(facs, names))
    spec = {"kind": "polynomial", "degree": degree}
    if not include_constant:
        spec["include_constant"] = False
    return FeatureLibrary(tuple(terms), n, m, tuple(names), spec)


def boucwen_library(names: Sequence[str] = ("z", "ydot"), include_constant: bool = False) -> FeatureLibrary:
    """Degree <= 2 products of {ydot, z, |ydot|, |z|} over channels (z, ydot)."""
    z, yd = 0, 1
    members = [
        [Factor(yd)],
        [Factor(z)],
        [Factor(yd, ABS)],
        [Factor(z, ABS)],
        [Factor(z), Factor(yd, ABS)],
        [Factor(z, ABS), Factor(yd)],
        [Factor(z, ABS), Factor(yd, ABS)],
        [Factor(z), Factor(yd)],
        [Factor(z, ID, 2)],
        [Factor(yd, ID, 2)],
    ]
    terms = [make_term(f, names) for f in members]
    if include_constant:
        terms.insert(0, make_term((), names))
    spec = {"kind": "boucwen"}
    if include_constant:
        spec["include_constant"] = True
    return FeatureLibrary(tuple(terms), 2, 0, tuple(names), spec)


def _resolve_channel(lib: FeatureLibrary, c) -> int:
    if isinstance(c, str):
        try:
            return lib.channel_names.index(c)
        except ValueError:
            raise ParameterError(f"unknown channel {c!r}") from None
    c = int(c)
    if not 0 <= c < lib.n + lib.m:
        raise ParameterError(f"channel index {c} out of range")
    return c


def sqrt_augmented_library(base: FeatureLibrary, channels: Sequence, guard=None, data: np.ndarray | None = None) -> FeatureLibrary:
    """Append ``sqrt(clip(c, lo, hi))`` for each listed channel.

    ``guard`` is one ``(lo, hi)`` pair for all channels or a mapping per
    channel. Missing ``hi`` defaults to 1.25 x the channel max of ``data``
    (the concatenated training (state, input) matrix) or +inf without data.
    """
    idx = [_resolve_channel(base, c) for c in channels]
    terms = []
    for c in idx:
        g = guard
        if isinstance(guard, dict):
            g = guard.get(base.channel_names[c], guard.get(c))
        lo, hi = (0.0, None) if g is None else g
        if lo < 0:
            raise ParameterError("sqrt guard lower bound must be >= 0")
        if hi is None:
            hi = 1.25 * float(np.max(data[:, c])) if data is not None else math.inf
            hi = max(hi, lo)
        terms.append(make_term([Factor(c, SQRT, 1, float(lo), float(hi))], base.channel_names))
    spec = None
    if base.spec is not None:
        spec = {"kind": "sqrt_augmented", "base": base.spec, "channels": [base.channel_names[c] for c in idx]}
    lib = base.extend(terms)
    return FeatureLibrary(lib.basis, lib.n, lib.m, lib.channel_names, spec)


def evaluate(lib: FeatureLibrary, states, inputs=None) -> np.ndarray:
    """Regression matrix: row k is phi(x_k, u_k) in library order."""
    x = np.atleast_2d(np.asarray(states, dtype=float))
    if inputs is None:
        u = np.zeros((x.shape[0], 0))
    else:
        u = np.asarray(inputs, dtype=float)
        if u.ndim < 2:
            u = u.reshape(x.shape[0], -1)
    if x.shape[1] != lib.n or u.shape[1] != lib.m:
        raise DataError(f"library expects {lib.n} states and {lib.m} inputs, got {x.shape[1]} and {u.shape[1]}")
    v = np.hstack([x, u])
    if v.shape[0] < 1:
        raise DataError("evaluate needs at least one row")
    bad = ~np.isfinite(v).all(axis=1)
    if bad.any():
        row = int(np.argmax(bad))
        raise DataError(f"non-finite value in row {row}", row=row)
    if not lib.basis:
        return np.zeros((v.shape[0], 0))
    return np.column_stack([b(v) for b in lib.basis])


_FACTOR_RE = re.compile(r"^(?:\|(?P<abs>[^|]+)\||sqrt\((?P<sqrt>[^()]+)\)|(?P<id>[^|()^*]+))(?:\^(?P<pow>\d+))?$")


def parse_basis_name(name: str, channel_names: Sequence[str], guards: dict | None = None) -> BasisFunction:
    """Inverse of the naming rule used by :func:`make_term`."""
    if name == "1":
        return make_term((), channel_names)
    facs = []
    for part in name.split("*"):
        mt = _FACTOR_RE.match(part)
        if mt is None:
            raise ParameterError(f"cannot parse basis factor {part!r} in {name!r}")
        if mt["abs"] is not None:
            ch, tr = mt["abs"], ABS
        elif mt["sqrt"] is not None:
            ch, tr = mt["sqrt"], SQRT
        else:
            ch, tr = mt["id"], ID
        if ch not in channel_names:
            raise ParameterError(f"unknown channel {ch!r} in basis {name!r}")
        lo, hi = 0.0, math.inf
        if tr == SQRT and guards and ch in guards:
            lo, hi = guards[ch]
            hi = math.inf if hi is None else hi
        facs.append(Factor(list(channel_names).index(ch), tr, int(mt["pow"] or 1), float(lo), float(hi)))
    term = make_term(facs, channel_names)
    if term.name != name:
        raise ParameterError(f"non-canonical basis name {name!r} (canonical: {term.name!r})")
    return term


def library_from_dict(doc: dict) -> FeatureLibrary:
    names = doc["channels"]
    terms = [parse_basis_name(t["name"], names, t.get("guard")) for t in doc["terms"]]
    return FeatureLibrary(tuple(terms), int(doc["n"]), int(doc["m"]), tuple(names), doc.get("spec"))


def library_from_spec(spec: dict, n: int, m: int, names: Sequence[str], data: np.ndarray | None = None) -> FeatureLibrary:
    """Build a library from a config entry such as ``{"kind": "polynomial", "degree": 2}``."""
    kind = spec.get("kind")
    if kind == "polynomial":
        return polynomial_library(n, m, int(spec.get("degree", 2)), names, spec.get("include_constant", True))
    if kind == "boucwen":
        if n + m != 2:
            raise ParameterError("the Bouc-Wen library is defined over exactly two channels (z, ydot)")
        return boucwen_library(names, spec.get("include_constant", False))
    if kind == "sqrt_augmented":
        base = library_from_spec(spec.get("base", {"kind": "polynomial", "degree": 2}), n, m, names, data)
        return sqrt_augmented_library(base, spec["channels"], spec.get("guard"), data)
    raise ParameterError(f"unknown library kind {kind!r}")
