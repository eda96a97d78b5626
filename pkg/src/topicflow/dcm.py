"""Log-domain Dirichlet compound multinomial marginals and predictive ratios.

The marginal of a document set D with per-document count vectors z_i is

    f(D) = prod_i [ (sum_j z_ij)! / prod_j z_ij! ] * delta(alpha + sum_i z_i) / delta(alpha)

with delta(a) = prod_j Gamma(a_j) / Gamma(sum_j a_j). Everything is computed
with log-gamma; realistic documents underflow otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import DomainError
from .model import SparseVec, sum_sparse

DEFAULT_ALPHA = 0.01


@lru_cache(maxsize=65536)
def _lgamma_cached(x: float) -> float:
    return float(gammaln(x))


def _lgamma(x: float, cached: bool = True) -> float:
    # count arguments repeat heavily across cut evaluations, so the scalar
    # cache is on by default; cache_log_gamma=False bypasses it
    if cached:
        return _lgamma_cached(x)
    return float(gammaln(x))


@dataclass(frozen=True)
class DcmParams:
    alpha: np.ndarray
    cache_log_gamma: bool = True
    _log_delta_alpha: float = field(init=False, default=0.0, repr=False)

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.ndim != 1 or alpha.size < 1:
            raise DomainError("alpha must be a non-empty vector")
        if np.any(alpha <= 0) or not np.all(np.isfinite(alpha)):
            raise DomainError("alpha components must be positive and finite")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "_log_delta_alpha", log_delta(alpha))

    @classmethod
    def symmetric(cls, vocab_size: int, alpha: float = DEFAULT_ALPHA) -> "DcmParams":
        return cls(alpha=np.full(vocab_size, alpha))

    @property
    def vocab_size(self) -> int:
        return self.alpha.size

    @property
    def log_delta_alpha(self) -> float:
        return self._log_delta_alpha


def log_delta(alpha: np.ndarray) -> float:
    """log delta(alpha) = sum_j logGamma(alpha_j) - logGamma(sum_j alpha_j)."""
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0) or not np.all(np.isfinite(alpha)):
        raise DomainError("alpha components must be positive and finite")
    return float(np.sum(gammaln(alpha)) - gammaln(alpha.sum()))


def doc_log_coefficient(vector: SparseVec, cached: bool = True) -> float:
    """log of the multinomial count coefficient (sum_j z_j)! / prod_j z_j!."""
    total = 0
    acc = 0.0
    for idx, c in vector.items():
        if c < 0:
            raise DomainError(f"negative count at term {idx}")
        total += c
        acc -= _lgamma(c + 1.0, cached)
    return acc + _lgamma(total + 1.0, cached)


def log_marginal(docs: Sequence[SparseVec], params: DcmParams) -> float:
    """log f(D) for a list of sparse count vectors. Empty D gives 0."""
    if not docs:
        return 0.0
    coeff = sum(doc_log_coefficient(v, params.cache_log_gamma) for v in docs)
    return coeff + log_delta_shift(sum_sparse(docs), params)


def log_delta_shift(total_counts: Mapping[int, int], params: DcmParams) -> float:
    """log delta(alpha + counts) - log delta(alpha), counts given sparsely.

    Only terms with nonzero counts move, so the delta ratio reduces to a sum
    over the support of `total_counts`.
    """
    alpha = params.alpha
    cached = params.cache_log_gamma
    a_sum = float(alpha.sum())
    n = 0
    acc = 0.0
    for idx, c in total_counts.items():
        if c < 0:
            raise DomainError(f"negative count at term {idx}")
        if c == 0:
            continue
        if idx < 0 or idx >= alpha.size:
            raise DomainError(f"term index {idx} outside vocabulary of size {alpha.size}")
        n += c
        acc += _lgamma(float(alpha[idx]) + c, cached) - _lgamma(float(alpha[idx]), cached)
    return acc - (_lgamma(a_sum + n, cached) - _lgamma(a_sum, cached))


def log_predictive(
    d_f: Sequence[SparseVec], d_s: Sequence[SparseVec], params: DcmParams
) -> float:
    """log f(D_f u D_s) - log f(D_s), the predictive ratio of the focus set.

    Callers are responsible for id-level deduplication of the union; the
    sequences passed here are the already-resolved member lists.
    """
    return log_marginal(list(d_f) + list(d_s), params) - log_marginal(d_s, params)


class DocSetMarginals:
    """Incremental log-marginal bookkeeping for document sets keyed by id.

    Stores each document's count coefficient and sparse vector once, then
    answers log f(S) and log f(F u S) queries from aggregated counts, keeping
    union semantics by id (a document in both sets contributes once).
    """

    def __init__(self, vectors: Mapping[str, SparseVec], params: DcmParams):
        self.vectors = vectors
        self.params = params
        self._coeff: Dict[str, float] = {}

    def coefficient(self, doc_id: str) -> float:
        c = self._coeff.get(doc_id)
        if c is None:
            c = doc_log_coefficient(self.vectors[doc_id], self.params.cache_log_gamma)
            self._coeff[doc_id] = c
        return c

    def aggregate(self, doc_ids: Iterable[str]):
        """(sum of log coefficients, sparse count sum) over distinct ids."""
        ids = set(doc_ids)
        coeff = sum(self.coefficient(d) for d in ids)
        counts = sum_sparse([self.vectors[d] for d in ids])
        return coeff, counts

    def log_marginal_ids(self, doc_ids: Iterable[str]) -> float:
        ids = set(doc_ids)
        if not ids:
            return 0.0
        coeff, counts = self.aggregate(ids)
        return coeff + log_delta_shift(counts, self.params)

    def log_predictive_ids(self, focus_ids, set_ids) -> float:
        focus_ids = set(focus_ids)
        set_ids = set(set_ids)
        return self.log_marginal_ids(focus_ids | set_ids) - self.log_marginal_ids(set_ids)
