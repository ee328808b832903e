"""Finite group algebra: composition tables, inverses, subgroups, kernels.

Elements are dense indices 0..order-1 with index 0 always the identity.
Cyclic C_n enumerates rotation counts directly; dihedral D_n encodes
element (k, s) -- rotation k composed after s applications of the
reflection -- at index k + n*s.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, UnsupportedActionError


@dataclass(frozen=True)
class FiniteGroup:
    """Immutable finite group given by its composition table."""

    kind: str                 # "cyclic" | "dihedral" | "explicit"
    order: int
    table: np.ndarray         # (order, order) int; table[a, b] = a*b
    inverse: np.ndarray       # (order,) int
    name: str

    def compose(self, a: int, b: int) -> int:
        return int(self.table[a, b])

    def inv(self, a: int) -> int:
        return int(self.inverse[a])

    def elements(self) -> range:
        return range(self.order)

    def __eq__(self, other) -> bool:
        return (isinstance(other, FiniteGroup)
                and self.order == other.order
                and np.array_equal(self.table, other.table))

    def __hash__(self):
        return hash((self.kind, self.order))


@dataclass(frozen=True)
class Subgroup:
    """A subset of a group's elements, validated to be a subgroup."""

    parent: FiniteGroup
    members: tuple[int, ...]

    def __post_init__(self):
        mem = tuple(sorted(set(int(m) for m in self.members)))
        object.__setattr__(self, "members", mem)
        if 0 not in mem:
            raise InvalidArgumentError("subgroup must contain the identity")
        inside = set(mem)
        for a in mem:
            if int(self.parent.inverse[a]) not in inside:
                raise InvalidArgumentError(f"subgroup not closed under inverse at {a}")
            for b in mem:
                if int(self.parent.table[a, b]) not in inside:
                    raise InvalidArgumentError(
                        f"subgroup not closed under composition at ({a},{b})")

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


def make_cyclic(n: int) -> FiniteGroup:
    """Cyclic group C_n; element k composed with j is (k+j) mod n."""
    if n < 1:
        raise InvalidArgumentError(f"cyclic group order must be >= 1, got {n}")
    idx = np.arange(n)
    table = (idx[:, None] + idx[None, :]) % n
    inverse = (-idx) % n
    return FiniteGroup("cyclic", n, table, inverse, f"c{n}")


def make_dihedral(n: int) -> FiniteGroup:
    """Dihedral group D_n of order 2n, elements (k, s) at index k + n*s."""
    if n < 1:
        raise InvalidArgumentError(f"dihedral parameter must be >= 1, got {n}")
    order = 2 * n
    table = np.empty((order, order), dtype=np.int64)
    for k1 in range(n):
        for s1 in range(2):
            a = k1 + n * s1
            for k2 in range(n):
                for s2 in range(2):
                    b = k2 + n * s2
                    k = (k1 - k2) % n if s1 else (k1 + k2) % n
                    table[a, b] = k + n * (s1 ^ s2)
    inverse = np.empty(order, dtype=np.int64)
    for a in range(order):
        inverse[a] = int(np.nonzero(table[a] == 0)[0][0])
    return FiniteGroup("dihedral", order, table, inverse, f"d{n}")


def make_explicit(table: np.ndarray, name: str = "explicit") -> FiniteGroup:
    """Group from a raw composition table; axioms checked on construction."""
    table = np.asarray(table, dtype=np.int64)
    if table.ndim != 2 or table.shape[0] != table.shape[1]:
        raise InvalidArgumentError("composition table must be square")
    order = table.shape[0]
    if table.min() < 0 or table.max() >= order:
        raise InvalidArgumentError("composition table entries out of range")
    inverse = np.empty(order, dtype=np.int64)
    for a in range(order):
        hits = np.nonzero(table[a] == 0)[0]
        if hits.size == 0:
            raise InvalidArgumentError(f"element {a} has no right inverse")
        inverse[a] = int(hits[0])
    g = FiniteGroup("explicit", order, table, inverse, name)
    problem = find_axiom_violation(g)
    if problem is not None:
        raise InvalidArgumentError(f"not a group: {problem}")
    return g


def find_axiom_violation(g: FiniteGroup) -> str | None:
    """First violated axiom over the full table, or None. Exhaustive."""
    t = g.table
    n = g.order
    if t.shape != (n, n):
        return f"table shape {t.shape} does not match order {n}"
    for a in range(n):
        if t[0, a] != a or t[a, 0] != a:
            return f"identity fails at element {a}: 0*{a}={t[0, a]}, {a}*0={t[a, 0]}"
    for a in range(n):
        inv = int(g.inverse[a])
        if t[a, inv] != 0 or t[inv, a] != 0:
            return f"inverse fails at element {a} (claimed inverse {inv})"
    for a in range(n):
        for b in range(n):
            for c in range(n):
                if t[t[a, b], c] != t[a, t[b, c]]:
                    return (f"associativity fails at ({a},{b},{c}): "
                            f"({a}*{b})*{c}={t[t[a, b], c]} but "
                            f"{a}*({b}*{c})={t[a, t[b, c]]}")
    return None


def verify_group_axioms(g: FiniteGroup) -> bool:
    """True iff identity, inverse, and associativity hold over the table."""
    return find_axiom_violation(g) is None


def whole_group(g: FiniteGroup) -> Subgroup:
    return Subgroup(g, tuple(range(g.order)))


def trivial_subgroup(g: FiniteGroup) -> Subgroup:
    return Subgroup(g, (0,))


def kernel_of(action, probe_dims: tuple[int, ...] | None = None) -> Subgroup:
    """Elements acting as the identity on the action's carrier.

    Permutation actions are decided exactly by applying each element to every
    standard basis tensor and cross-checked against the declared kernel.
    Interpolated actions are never exactly identity except structurally, so
    only their declared kernel is trusted.
    """
    declared = action.declared_kernel
    if probe_dims is not None and tuple(probe_dims) != tuple(action.carrier):
        raise InvalidArgumentError(
            f"probe dims {probe_dims} do not match action carrier {action.carrier}")
    if not action.is_permutation:
        if declared is None:
            raise UnsupportedActionError(
                "kernel of a non-permutation action is not numerically decidable; "
                "declare it at construction")
        return declared
    dims = probe_dims if probe_dims is not None else action.carrier
    members = []
    size = int(np.prod(dims))
    basis = np.zeros(size, dtype=np.float32)
    for g in action.group.elements():
        fixes_all = True
        for i in range(size):
            basis[i] = 1.0
            probe = basis.reshape(dims)
            if not np.array_equal(action.apply(g, probe), probe):
                fixes_all = False
                basis[i] = 0.0
                break
            basis[i] = 0.0
        if fixes_all:
            members.append(g)
    computed = Subgroup(action.group, tuple(members))
    if declared is not None and tuple(declared.members) != computed.members:
        raise InvalidArgumentError(
            f"declared kernel {declared.members} disagrees with computed "
            f"kernel {computed.members}")
    return computed


def group_to_dict(g: FiniteGroup) -> dict:
    return {
        "kind": g.kind,
        "name": g.name,
        "order": g.order,
        "table": g.table.tolist(),
        "inverse": g.inverse.tolist(),
    }


def group_from_dict(d: dict) -> FiniteGroup:
    table = np.asarray(d["table"], dtype=np.int64)
    inverse = np.asarray(d["inverse"], dtype=np.int64)
    g = FiniteGroup(d["kind"], int(d["order"]), table, inverse, d["name"])
    problem = find_axiom_violation(g)
    if problem is not None:
        raise InvalidArgumentError(f"serialized group is invalid: {problem}")
    return g


def group_by_name(name: str) -> FiniteGroup:
    """Parse CLI group names: c<n> for cyclic, d<n> for dihedral."""
    name = name.strip().lower()
    if len(name) >= 2 and name[0] in ("c", "d") and name[1:].isdigit():
        n = int(name[1:])
        return make_cyclic(n) if name[0] == "c" else make_dihedral(n)
    raise InvalidArgumentError(f"unknown group name {name!r} (expected c<n> or d<n>)")
