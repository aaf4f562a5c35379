# business_logic/jets.py
# Truncated Taylor jets of tensor fields at a point.
#
# A TensorJet holds a tensor value T and its partial derivatives up to a fixed
# order. Derivative indices trail the tensor indices, so derivs[r-1] has shape
# value.shape + (n,) * r and is symmetric in its last r axes. Products and
# contractions follow the Leibniz rule, so any polynomial/rational tensor
# formula applied to jets yields the jet of the result.

from itertools import combinations
from typing import List, Sequence

import numpy as np

_DERIVATIVE_LETTERS = 'UVWXYZ'


class TensorJet:
    """Value and partial derivatives (up to `order`) of a tensor field at one point"""

    __slots__ = ('value', 'derivs', 'dim')

    def __init__(self, value, derivs: Sequence[np.ndarray], dim: int):
        self.value = np.asarray(value, dtype=float)
        self.derivs = tuple(np.asarray(d, dtype=float) for d in derivs)
        self.dim = dim

    @property
    def order(self) -> int:
        return len(self.derivs)

    @property
    def rank(self) -> int:
        return self.value.ndim

    @classmethod
    def constant(cls, value, dim: int, order: int) -> 'TensorJet':
        value = np.asarray(value, dtype=float)
        derivs = [np.zeros(value.shape + (dim,) * r) for r in range(1, order + 1)]
        return cls(value, derivs, dim)

    def part(self, r: int) -> np.ndarray:
        return self.value if r == 0 else self.derivs[r - 1]

    def truncate(self, order: int) -> 'TensorJet':
        return TensorJet(self.value, self.derivs[:max(order, 0)], self.dim)

    def gradient(self) -> 'TensorJet':
        """Jet of the partial derivative d_k T, with k as the new last index"""
        if not self.derivs:
            raise ValueError("cannot take the gradient of an order-0 jet")
        return TensorJet(self.derivs[0], self.derivs[1:], self.dim)

    def permute(self, *axes: int) -> 'TensorJet':
        """Transpose the tensor indices; derivative indices stay in place"""
        rank = self.rank
        if sorted(axes) != list(range(rank)):
            raise ValueError(f"invalid permutation {axes} for rank {rank}")
        value = np.transpose(self.value, axes)
        derivs = [np.transpose(d, tuple(axes) + tuple(range(rank, rank + r + 1)))
                  for r, d in enumerate(self.derivs)]
        return TensorJet(value, derivs, self.dim)

    def _binary(self, other: 'TensorJet', op) -> 'TensorJet':
        order = min(self.order, other.order)
        value = op(self.value, other.value)
        derivs = [op(a, b) for a, b in zip(self.derivs[:order], other.derivs[:order])]
        return TensorJet(value, derivs, self.dim)

    def __add__(self, other: 'TensorJet') -> 'TensorJet':
        return self._binary(other, np.add)

    def __sub__(self, other: 'TensorJet') -> 'TensorJet':
        return self._binary(other, np.subtract)

    def __neg__(self) -> 'TensorJet':
        return TensorJet(-self.value, [-d for d in self.derivs], self.dim)

    def __mul__(self, scalar: float) -> 'TensorJet':
        return TensorJet(self.value * scalar, [d * scalar for d in self.derivs], self.dim)

    __rmul__ = __mul__

    def apply(self, f0, f1, f2=None, f3=None) -> 'TensorJet':
        """Elementwise composition f(T) given f and its derivatives evaluated at T.value"""
        u1 = self.derivs[0] if self.order >= 1 else None
        u2 = self.derivs[1] if self.order >= 2 else None
        u3 = self.derivs[2] if self.order >= 3 else None
        derivs: List[np.ndarray] = []
        if u1 is not None:
            derivs.append(f1[..., None] * u1)
        if u2 is not None:
            derivs.append(f1[..., None, None] * u2
                          + f2[..., None, None] * np.einsum('...a,...b->...ab', u1, u1))
        if u3 is not None:
            mixed = (np.einsum('...ab,...c->...abc', u2, u1)
                     + np.einsum('...ac,...b->...abc', u2, u1)
                     + np.einsum('...bc,...a->...abc', u2, u1))
            derivs.append(f1[..., None, None, None] * u3
                          + f2[..., None, None, None] * mixed
                          + f3[..., None, None, None] * np.einsum('...a,...b,...c->...abc', u1, u1, u1))
        return TensorJet(f0, derivs, self.dim)

    def exp(self) -> 'TensorJet':
        e = np.exp(self.value)
        return self.apply(e, e, e, e)

    def __repr__(self):
        return f"TensorJet(shape={self.value.shape}, order={self.order}, dim={self.dim})"


def reduce(subscripts: str, jet: TensorJet) -> TensorJet:
    """Single-operand einsum (traces, index moves) applied to every derivative order"""
    source, target = subscripts.split('->')
    derivs = []
    for r, d in enumerate(jet.derivs, start=1):
        letters = _DERIVATIVE_LETTERS[:r]
        derivs.append(np.einsum(f'{source}{letters}->{target}{letters}', d))
    return TensorJet(np.einsum(subscripts, jet.value), derivs, jet.dim)


def contract(subscripts: str, a: TensorJet, b: TensorJet) -> TensorJet:
    """Two-operand einsum on jets via the generalised Leibniz rule.

    Derivative axes of the inputs are distributed over every split of the
    output derivative letters; the result is truncated to the smaller order.
    """
    inputs, target = subscripts.split('->')
    sa, sb = inputs.split(',')
    order = min(a.order, b.order)
    value = np.einsum(subscripts, a.value, b.value)
    derivs = []
    for r in range(1, order + 1):
        letters = _DERIVATIVE_LETTERS[:r]
        total = None
        for k in range(r + 1):
            for chosen in combinations(range(r), k):
                la = ''.join(letters[t] for t in chosen)
                lb = ''.join(letters[t] for t in range(r) if t not in chosen)
                term = np.einsum(f'{sa}{la},{sb}{lb}->{target}{letters}', a.part(k), b.part(r - k))
                total = term if total is None else total + term
        derivs.append(total)
    return TensorJet(value, derivs, a.dim)


def scale(s: TensorJet, t: TensorJet) -> TensorJet:
    """Product of a scalar jet with a tensor jet"""
    letters = 'abcdefgh'[:t.rank]
    return contract(f',{letters}->{letters}', s, t)


def inverse(g: TensorJet) -> TensorJet:
    """Jet of the matrix inverse, solved order by order from (G H) = I"""
    h0 = np.linalg.inv(g.value)
    parts = [h0]
    for r in range(1, g.order + 1):
        letters = _DERIVATIVE_LETTERS[:r]
        acc = np.zeros(h0.shape + (g.dim,) * r)
        for k in range(1, r + 1):
            for chosen in combinations(range(r), k):
                lg = ''.join(letters[t] for t in chosen)
                lh = ''.join(letters[t] for t in range(r) if t not in chosen)
                acc = acc + np.einsum(f'ij{lg},jk{lh}->ik{letters}', g.part(k), parts[r - k])
        parts.append(-np.einsum(f'ij,jk{letters}->ik{letters}', h0, acc))
    return TensorJet(parts[0], parts[1:], g.dim)


def log_abs_det(g: TensorJet, g_inv: TensorJet) -> TensorJet:
    """Jet of ln|det G|, using d ln|det G| = tr(G^-1 dG)"""
    _, logdet = np.linalg.slogdet(g.value)
    if g.order == 0:
        return TensorJet(logdet, [], g.dim)
    grad = contract('ij,jik->k', g_inv, g.gradient())
    return TensorJet(logdet, [grad.value, *grad.derivs], g.dim)
