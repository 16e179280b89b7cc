"""Assembly of the order n^-2 risk expansion from an eta table and moments.

The expected alpha-divergence of the regression MLE expands as

    ED(alpha, n) = (p+2)/(2n) + q(alpha)/n^2 + o(n^-2),

where q is a quadratic in alpha.  This module carries an
:class:`~mlerisk.eta.EtaTable` plus a moment summary through the chain

    metric block -> pattern combinators -> L terms -> geometric invariants
    -> (qa, qb, qc)

using plain Python arithmetic throughout, so exact rational tables yield
exact rational coefficients.  The sums over the special index pair
{intercept, sigma} are written out verbatim from the published computational
pipeline; where that pipeline and its accompanying derivation disagree, the
pipeline wins, because the published coefficient tables are its output.  Its
use of the regressor count p (rather than the full parameter count p+2)
inside two of the inner products is likewise kept; the alternative reading is
reported alongside as a diagnostic.

Everything here is pure and immutable; expansions can be evaluated
concurrently over parameter sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .eta import EtaTable, EtaEntry
from .moments import to_aggregated

__all__ = [
    "MetricBlock",
    "LTerms",
    "GeometricInvariants",
    "RiskExpansion",
    "SingularInformationError",
    "metric_block",
    "eta_pattern",
    "l_terms",
    "geometric_invariants",
    "risk_expansion",
    "build_risk_expansion",
    "evaluate_risk",
]

_S = (0, 1)  # special indices: 0 = intercept slot (B type), 1 = sigma slot


class SingularInformationError(ArithmeticError):
    """The {intercept, sigma} information block is numerically singular."""


@dataclass(frozen=True)
class MetricBlock:
    """sigma-free inverse-information data for the {0, sigma} block.

    ``tg00``, ``tg0s``, ``tgss`` are sigma^-2 times the inverse-metric
    entries g^00, g^0s, g^ss; ``eta0020`` is the per-coordinate information
    of the slope block.
    """

    eta0020: object
    delta: object
    tg00: object
    tg0s: object
    tgss: object

    def tg(self, a: int, b: int):
        if a == 0 and b == 0:
            return self.tg00
        if a == 1 and b == 1:
            return self.tgss
        return self.tg0s


def metric_block(table: EtaTable) -> MetricBlock:
    v = table.value
    eta0020 = v(0, 0, 2, 0)
    gss = 1 + 2 * v(0, 0, 1, 1) + v(0, 0, 2, 2)
    delta = eta0020 * gss - v(0, 1, 0, 1) ** 2
    if abs(float(delta)) <= 1e-12 * abs(float(eta0020)):
        raise SingularInformationError(
            f"singular information block for {table.model_label}: delta = {float(delta):.3e}"
        )
    return MetricBlock(
        eta0020=eta0020,
        delta=delta,
        tg00=gss / delta,
        tg0s=v(0, 1, 0, 1) / delta,
        tgss=eta0020 / delta,
    )


# ---------------------------------------------------------------------------
# Pattern combinators.  Each maps sigma-counts within the index groups to the
# published linear combination of eta entries.  Slot code: 0 = beta-type
# index, 1 = sigma.  All listed symmetries (order within a group, order of
# the groups of equal shape) hold by construction.
# ---------------------------------------------------------------------------


def _pair_single(t: EtaTable, ns_pair: int, ns_single: int):
    v = t.value
    key = (ns_pair, ns_single)
    if key == (0, 0):
        return -v(0, 1, 1, 0)
    if key == (1, 0):
        return -(v(0, 1, 1, 1) + v(0, 0, 2, 0))
    if key == (0, 1):
        return -(v(0, 1, 0, 0) + v(0, 1, 1, 1))
    if key == (1, 1):
        return -(v(0, 1, 0, 1) + v(0, 1, 1, 2) + v(0, 0, 2, 1))
    if key == (2, 0):
        return -(v(0, 1, 1, 2) + 2 * v(0, 0, 2, 1))
    if key == (2, 1):
        return -(1 + 3 * v(0, 0, 1, 1) + v(0, 1, 0, 2) + 2 * v(0, 0, 2, 2) + v(0, 1, 1, 3))
    raise ValueError(f"bad sigma counts for (ab)c pattern: {key}")


def _triple(t: EtaTable, ns: int):
    v = t.value
    if ns == 0:
        return -v(0, 0, 3, 0)
    if ns == 1:
        return -(v(0, 0, 2, 0) + v(0, 0, 3, 1))
    if ns == 2:
        # the derivation's form; the program listing carries an extra
        # eta[0,0,1,0], identically zero by the table invariants
        return -(2 * v(0, 0, 2, 1) + v(0, 0, 3, 2))
    if ns == 3:
        return -(1 + 3 * v(0, 0, 1, 1) + 3 * v(0, 0, 2, 2) + v(0, 0, 3, 3))
    raise ValueError(f"bad sigma count for abc pattern: {ns}")


def _pair_pair(t: EtaTable, n1: int, n2: int):
    v = t.value
    key = (min(n1, n2), max(n1, n2))
    if key == (0, 0):
        return v(0, 2, 0, 0)
    if key == (0, 1):
        return v(0, 2, 0, 1) + v(0, 1, 1, 0)
    if key == (1, 1):
        return v(0, 2, 0, 2) + 2 * v(0, 1, 1, 1) + v(0, 0, 2, 0)
    if key == (0, 2):
        return v(0, 1, 0, 0) + v(0, 2, 0, 2) + 2 * v(0, 1, 1, 1)
    if key == (1, 2):
        return v(0, 1, 0, 1) + v(0, 2, 0, 3) + 3 * v(0, 1, 1, 2) + 2 * v(0, 0, 2, 1)
    if key == (2, 2):
        return (
            1
            + v(0, 2, 0, 4)
            + 4 * v(0, 0, 2, 2)
            + 2 * v(0, 1, 0, 2)
            + 4 * v(0, 0, 1, 1)
            + 4 * v(0, 1, 1, 3)
        )
    raise ValueError(f"bad sigma counts for (ab)(cd) pattern: {key}")


def _triple_single(t: EtaTable, ns_triple: int, ns_single: int):
    v = t.value
    key = (ns_triple, ns_single)
    if key == (0, 0):
        return v(1, 0, 1, 0)
    if key == (0, 1):
        return v(1, 0, 0, 0) + v(1, 0, 1, 1)
    if key == (1, 0):
        return 2 * v(0, 1, 1, 0) + v(1, 0, 1, 1)
    if key == (2, 0):
        return 4 * v(0, 1, 1, 1) + 2 * v(0, 0, 2, 0) + v(1, 0, 1, 2)
    if key == (1, 1):
        return 2 * v(0, 1, 0, 0) + v(1, 0, 0, 1) + 2 * v(0, 1, 1, 1) + v(1, 0, 1, 2)
    if key == (2, 1):
        return (
            4 * v(0, 1, 0, 1)
            + v(1, 0, 0, 2)
            + 4 * v(0, 1, 1, 2)
            + 2 * v(0, 0, 2, 1)
            + v(1, 0, 1, 3)
        )
    if key == (3, 0):
        return 6 * v(0, 1, 1, 2) + 6 * v(0, 0, 2, 1) + v(1, 0, 1, 3)
    if key == (3, 1):
        return (
            2
            + 6 * v(0, 1, 0, 2)
            + 6 * v(0, 0, 1, 1)
            + v(1, 0, 0, 3)
            + 2 * v(0, 0, 1, 1)
            + 6 * v(0, 1, 1, 3)
            + 6 * v(0, 0, 2, 2)
            + v(1, 0, 1, 4)
        )
    raise ValueError(f"bad sigma counts for (abc)d pattern: {key}")


def _pair_two(t: EtaTable, ns_pair: int, ns_rest: int):
    v = t.value
    key = (ns_pair, ns_rest)
    if key == (0, 0):
        return v(0, 1, 2, 0)
    if key == (0, 1):
        return v(0, 1, 1, 0) + v(0, 1, 2, 1)
    if key == (1, 0):
        return v(0, 1, 2, 1) + v(0, 0, 3, 0)
    if key == (0, 2):
        return v(0, 1, 0, 0) + 2 * v(0, 1, 1, 1) + v(0, 1, 2, 2)
    if key == (1, 1):
        return v(0, 1, 1, 1) + v(0, 0, 2, 0) + v(0, 1, 2, 2) + v(0, 0, 3, 1)
    if key == (2, 0):
        return v(0, 0, 2, 0) + 2 * v(0, 0, 3, 1) + v(0, 1, 2, 2)
    if key == (1, 2):
        return (
            v(0, 1, 0, 1)
            + 2 * v(0, 1, 1, 2)
            + 2 * v(0, 0, 2, 1)
            + v(0, 1, 2, 3)
            + v(0, 0, 3, 2)
        )
    if key == (2, 1):
        # total weight 3 on eta[0,0,2,1], exactly as the source writes it
        return (
            2 * v(0, 0, 2, 1)
            + v(0, 1, 1, 2)
            + v(0, 0, 2, 1)
            + 2 * v(0, 0, 3, 2)
            + v(0, 1, 2, 3)
        )
    if key == (2, 2):
        return (
            1
            + 4 * v(0, 0, 1, 1)
            + v(0, 1, 0, 2)
            + 5 * v(0, 0, 2, 2)
            + 2 * v(0, 1, 1, 3)
            + 2 * v(0, 0, 3, 3)
            + v(0, 1, 2, 4)
        )
    raise ValueError(f"bad sigma counts for (ab)cd pattern: {key}")


def _four(t: EtaTable, ns: int):
    v = t.value
    if ns == 0:
        return v(0, 0, 4, 0)
    if ns == 1:
        return v(0, 0, 3, 0) + v(0, 0, 4, 1)
    if ns == 2:
        return v(0, 0, 2, 0) + 2 * v(0, 0, 3, 1) + v(0, 0, 4, 2)
    if ns == 3:
        return 3 * v(0, 0, 2, 1) + 3 * v(0, 0, 3, 2) + v(0, 0, 4, 3)
    if ns == 4:
        return (
            1 + 4 * v(0, 0, 1, 1) + 6 * v(0, 0, 2, 2) + 4 * v(0, 0, 3, 3) + v(0, 0, 4, 4)
        )
    raise ValueError(f"bad sigma count for abcd pattern: {ns}")


def eta_pattern(table: EtaTable, pattern: str):
    """Evaluate a mixed-index moment pattern such as ``"(BS)S"`` or ``"SSSS"``.

    Slots are B (a beta-type index) or S (sigma); parentheses mark a grouped
    second/third derivative factor.  Patterns that coincide under the listed
    symmetries (order within a group, group order) give identical values.
    """
    groups: list[str] = []
    i = 0
    s = pattern.replace(" ", "")
    while i < len(s):
        ch = s[i]
        if ch == "(":
            close = s.find(")", i)
            if close < 0:
                raise ValueError(f"unbalanced parenthesis in pattern {pattern!r}")
            groups.append(s[i + 1 : close])
            i = close + 1
        elif ch in "BS":
            groups.append(ch)
            i += 1
        else:
            raise ValueError(f"unexpected character {ch!r} in pattern {pattern!r}")
    if any(set(g) - {"B", "S"} for g in groups):
        raise ValueError(f"pattern slots must be B or S: {pattern!r}")
    ns = [g.count("S") for g in groups]
    sizes = [len(g) for g in groups]
    order = sorted(range(len(groups)), key=lambda idx: -sizes[idx])
    sizes = [sizes[idx] for idx in order]
    ns = [ns[idx] for idx in order]
    if sizes == [2, 1]:
        return _pair_single(table, ns[0], ns[1])
    if sizes == [1, 1, 1]:
        return _triple(table, sum(ns))
    if sizes == [2, 2]:
        return _pair_pair(table, ns[0], ns[1])
    if sizes == [3, 1]:
        return _triple_single(table, ns[0], ns[1])
    if sizes == [2, 1, 1]:
        return _pair_two(table, ns[0], ns[1] + ns[2])
    if sizes == [1, 1, 1, 1]:
        return _four(table, sum(ns))
    raise ValueError(f"unknown pattern shape {pattern!r}")


# ---------------------------------------------------------------------------
# L terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LTerms:
    l11: object
    l12: object
    l13: object
    l14: object
    l15: object
    l21: object
    l22: object
    l23: object
    l24: object
    l25: object
    l26: object


def l_terms(table: EtaTable, moments) -> LTerms:
    """All eleven metric-contracted L sums for the given moment summary."""
    agg = to_aggregated(moments)
    g = metric_block(table)
    p = agg.p
    M2a, M2b, M1 = agg.M2a, agg.M2b, agg.M1
    w = 1 / g.eta0020
    tg = g.tg

    e3p = lambda a, b: _pair_single(table, a, b)
    e3 = lambda a: _triple(table, a)
    e22 = lambda a, b: _pair_pair(table, a, b)
    e211 = lambda a, b: _pair_two(table, a, b)
    e4 = lambda a: _four(table, a)

    ll21 = w**3 * M2a * e3p(0, 0) * e3(0)
    ll21 += w**2 * p * sum(tg(s, u) * e3p(0, s) * e3(u) for s in _S for u in _S)
    ll21 += w**2 * p * sum(tg(k, l) * e3p(k, 0) * e3(l) for k in _S for l in _S)
    ll21 += w**2 * p * sum(tg(i, j) * e3p(i, 0) * e3(j) for i in _S for j in _S)
    ll21 += sum(
        tg(i, j) * tg(k, l) * tg(s, u) * e3p(i + k, s) * e3(j + l + u)
        for i in _S for j in _S for k in _S for l in _S for s in _S for u in _S
    )

    ll22 = w**3 * M2b * e3p(0, 0) * e3(0)
    ll22 += w**2 * p**2 * sum(tg(k, l) * e3p(0, k) * e3(l) for k in _S for l in _S)
    ll22 += w * p * sum(
        tg(k, l) * tg(s, u) * e3p(0, k) * e3(l + s + u)
        for k in _S for l in _S for s in _S for u in _S
    )
    ll22 += w * p * sum(
        tg(i, j) * tg(k, l) * e3p(i + j, k) * e3(l)
        for i in _S for j in _S for k in _S for l in _S
    )
    ll22 += sum(
        tg(i, j) * tg(k, l) * tg(s, u) * e3p(i + j, k) * e3(l + s + u)
        for i in _S for j in _S for k in _S for l in _S for s in _S for u in _S
    )

    ll23 = w**3 * M2a * e3(0) * e3(0)
    ll23 += w**2 * p * sum(tg(s, u) * e3(s) * e3(u) for s in _S for u in _S)
    ll23 += w**2 * p * sum(tg(k, l) * e3(k) * e3(l) for k in _S for l in _S)
    ll23 += w**2 * p * sum(tg(i, j) * e3(i) * e3(j) for i in _S for j in _S)
    ll23 += sum(
        tg(i, j) * tg(k, l) * tg(s, u) * e3(i + k + s) * e3(j + l + u)
        for i in _S for j in _S for k in _S for l in _S for s in _S for u in _S
    )

    ll24 = w**3 * M2b * e3(0) * e3(0)
    ll24 += w**2 * p**2 * sum(tg(k, l) * e3(k) * e3(l) for k in _S for l in _S)
    ll24 += w * p * sum(
        tg(k, l) * tg(s, u) * e3(k) * e3(l + s + u)
        for k in _S for l in _S for s in _S for u in _S
    )
    ll24 += w * p * sum(
        tg(i, j) * tg(k, l) * e3(i + j + k) * e3(l)
        for i in _S for j in _S for k in _S for l in _S
    )
    ll24 += sum(
        tg(i, j) * tg(k, l) * tg(s, u) * e3(i + j + k) * e3(l + s + u)
        for i in _S for j in _S for k in _S for l in _S for s in _S for u in _S
    )

    ll25 = w**3 * M2a * e3p(0, 0) * e3p(0, 0)
    ll25 += w**2 * p * sum(tg(s, u) * e3p(0, s) * e3p(0, u) for s in _S for u in _S)
    ll25 += w**2 * p * sum(tg(k, l) * e3p(k, 0) * e3p(l, 0) for k in _S for l in _S)
    ll25 += w**2 * p * sum(tg(i, j) * e3p(i, 0) * e3p(j, 0) for i in _S for j in _S)
    ll25 += sum(
        tg(i, j) * tg(k, l) * tg(s, u) * e3p(i + k, s) * e3p(j + l, u)
        for i in _S for j in _S for k in _S for l in _S for s in _S for u in _S
    )

    ll26 = w**3 * M2b * e3p(0, 0) * e3p(0, 0)
    ll26 += w**2 * p**2 * sum(tg(k, l) * e3p(0, k) * e3p(0, l) for k in _S for l in _S)
    ll26 += w * p * sum(
        tg(k, l) * tg(s, u) * e3p(0, k) * e3p(s + u, l)
        for k in _S for l in _S for s in _S for u in _S
    )
    ll26 += w * p * sum(
        tg(i, j) * tg(k, l) * e3p(i + j, k) * e3p(0, l)
        for i in _S for j in _S for k in _S for l in _S
    )
    ll26 += sum(
        tg(i, j) * tg(k, l) * tg(s, u) * e3p(i + j, k) * e3p(s + u, l)
        for i in _S for j in _S for k in _S for l in _S for s in _S for u in _S
    )

    ll11 = w**2 * M1 * e211(0, 0)
    ll11 += w * p * sum(tg(k, l) * e211(l, k) for k in _S for l in _S)
    ll11 += w * p * sum(tg(i, j) * e211(i, j) for i in _S for j in _S)
    ll11 += sum(
        tg(i, j) * tg(k, l) * e211(i + l, j + k)
        for i in _S for j in _S for k in _S for l in _S
    )

    # The M1 weight below follows the published program listing, which pairs
    # M1 with the (ab)(cd) combinator here; its derivation text writes the
    # (ab)cd one instead.  Every published coefficient table requires the
    # listing's variant.
    ll12 = w**2 * M1 * e22(0, 0)
    ll12 += w * p * sum(tg(k, l) * e211(0, k + l) for k in _S for l in _S)
    ll12 += w * p * sum(tg(i, j) * e211(i + j, 0) for i in _S for j in _S)
    ll12 += sum(
        tg(i, j) * tg(k, l) * e211(i + j, k + l)
        for i in _S for j in _S for k in _S for l in _S
    )

    ll13 = w**2 * M1 * e4(0)
    ll13 += w * p * sum(tg(k, l) * e4(k + l) for k in _S for l in _S)
    ll13 += w * p * sum(tg(i, j) * e4(i + j) for i in _S for j in _S)
    ll13 += sum(
        tg(i, j) * tg(k, l) * e4(i + j + k + l)
        for i in _S for j in _S for k in _S for l in _S
    )

    ll14 = w**2 * M1 * e22(0, 0)
    ll14 += w * p * sum(tg(k, l) * e22(l, k) for k in _S for l in _S)
    ll14 += w * p * sum(tg(i, j) * e22(i, j) for i in _S for j in _S)
    ll14 += sum(
        tg(i, j) * tg(k, l) * e22(i + k, j + l)
        for i in _S for j in _S for k in _S for l in _S
    )

    ll15 = w**2 * M1 * e22(0, 0)
    ll15 += w * p * sum(tg(k, l) * e22(0, k + l) for k in _S for l in _S)
    ll15 += w * p * sum(tg(i, j) * e22(i + j, 0) for i in _S for j in _S)
    ll15 += sum(
        tg(i, j) * tg(k, l) * e22(i + j, k + l)
        for i in _S for j in _S for k in _S for l in _S
    )

    return LTerms(
        l11=ll11, l12=ll12, l13=ll13, l14=ll14, l15=ll15,
        l21=ll21, l22=ll22, l23=ll23, l24=ll24, l25=ll25, l26=ll26,
    )


@dataclass(frozen=True)
class GeometricInvariants:
    ffe: object
    tt1: object
    tt2: object
    rre: object
    aaee1: object
    aaee2: object
    aaem1: object
    aaem2: object


def geometric_invariants(lt: LTerms, p: int, dim=None) -> GeometricInvariants:
    """Contract the L terms into the invariants entering the expansion.

    ``dim`` is the parameter-count symbol subtracted inside the two
    self-inner-products; the reference pipeline substitutes the regressor
    count p there (the default), the alternative reading uses p + 2.
    """
    d = p if dim is None else dim
    return GeometricInvariants(
        ffe=2 * lt.l11 + lt.l12 + lt.l13 - 2 * lt.l21 - lt.l23 - lt.l22,
        tt1=lt.l23,
        tt2=lt.l24,
        rre=lt.l14 - lt.l15 + lt.l11 - lt.l12 - lt.l25 + lt.l26 + lt.l22 - lt.l21,
        aaee1=lt.l14 - lt.l25 - d,
        aaee2=lt.l15 - lt.l26 - d * d,
        aaem1=lt.l11 + lt.l14 - lt.l25 - lt.l21,
        aaem2=lt.l12 + lt.l15 - lt.l26 - lt.l22,
    )


@dataclass(frozen=True)
class RiskExpansion:
    """ED(alpha, n) ~ main/n + (qa alpha^2 + qb alpha + qc)/n^2."""

    p: int
    main: object
    qa: object
    qb: object
    qc: object
    validity_n_min: int
    coeff_error: float = 0.0
    q_alt: tuple = None  # (qa, qb, qc) under the p+2 dimension reading
    model_label: str = ""

    def q(self, alpha):
        return self.qa * alpha * alpha + self.qb * alpha + self.qc

    def evaluate(self, alpha, n: int):
        if n < 1:
            raise ValueError("n must be a positive integer")
        return self.main / n + self.q(alpha) / (n * n)

    def is_exact(self) -> bool:
        return isinstance(self.qa, Fraction)

    def to_jsonable(self) -> dict:
        out = {
            "p": self.p,
            "main": float(self.main),
            "q": [float(self.qa), float(self.qb), float(self.qc)],
            "validity_n_min": self.validity_n_min,
            "coeff_error": self.coeff_error,
            "model": self.model_label,
        }
        if self.is_exact():
            out["q_exact"] = [str(self.qa), str(self.qb), str(self.qc)]
        if self.q_alt is not None:
            out["q_full_param_count"] = [float(c) for c in self.q_alt]
        return out


def evaluate_risk(expansion: RiskExpansion, alpha, n: int):
    """Evaluate the truncated expansion; flags n below the validity region."""
    value = expansion.evaluate(alpha, n)
    return value, n < expansion.validity_n_min


def _q_from_invariants(gi: GeometricInvariants, p: int, dim=None):
    """(qa, qb, qc) from the bracket written in alpha' = (1 - alpha)/2."""
    d = p if dim is None else dim
    A = (
        3 * gi.ffe
        + 3 * gi.tt1
        - 6 * gi.aaem1
        + 6 * gi.aaee1
        - 3 * gi.aaem2
        + 3 * gi.aaee2
        + 3 * d * d
        + 6 * d
    )
    B = (
        3 * gi.ffe
        - 5 * gi.tt1
        - 6 * gi.tt2
        + 6 * gi.aaem1
        - 6 * gi.aaee1
        + 3 * gi.aaem2
        - 3 * gi.aaee2
        - 3 * d * d
        - 6 * d
    )
    C = (
        12 * gi.aaee1
        - 2 * gi.aaem1
        - gi.aaem2
        + gi.tt1
        + 9 * gi.tt2
        + 8 * gi.rre
        - 9 * gi.ffe
    )
    if isinstance(A, Fraction) or isinstance(B, Fraction) or isinstance(C, Fraction):
        qa = Fraction(A, 96)
        qb = -Fraction(A + B, 48)
        qc = Fraction(A + 2 * B + 4 * C, 96)
    else:
        qa = A / 96
        qb = -(A + B) / 48
        qc = (A + 2 * B + 4 * C) / 96
    return qa, qb, qc


def _validity_n_min(p: int, main, q_ref) -> int:
    """Smallest n >= p+3 where ED(-1, .) is positive and decreasing."""

    def ok(n: int) -> bool:
        positive = main * n + q_ref > 0
        decreasing = main * n * (n + 1) + q_ref * (2 * n + 1) > 0
        return positive and decreasing

    n = p + 3
    if q_ref < 0:
        n = max(n, int(-2 * float(q_ref) / float(main)) - 3)
    while not ok(n):
        n += 1
        if n > 10**9:  # main/n dominates eventually; this is unreachable
            raise RuntimeError("validity search did not terminate")
    while n - 1 >= p + 3 and ok(n - 1):
        n -= 1
    return n


def risk_expansion(table: EtaTable, moments, with_error: bool = True) -> RiskExpansion:
    """Assemble the full expansion for an eta table and a moment summary."""
    agg = to_aggregated(moments)
    p = agg.p
    lt = l_terms(table, agg)
    gi = geometric_invariants(lt, p)
    qa, qb, qc = _q_from_invariants(gi, p)
    gi_alt = geometric_invariants(lt, p, dim=p + 2)
    q_alt = _q_from_invariants(gi_alt, p, dim=p + 2)
    main = Fraction(p + 2, 2) if isinstance(qa, Fraction) else (p + 2) / 2
    q_ref = qa - qb + qc  # alpha = -1, the reference divergence
    coeff_error = 0.0
    if with_error and not table.exact:
        coeff_error = _propagate_coefficient_error(table, agg, (qa, qb, qc))
    return RiskExpansion(
        p=p,
        main=main,
        qa=qa,
        qb=qb,
        qc=qc,
        validity_n_min=_validity_n_min(p, main, q_ref),
        coeff_error=coeff_error,
        q_alt=q_alt,
        model_label=table.model_label,
    )


def _propagate_coefficient_error(table: EtaTable, agg, q0) -> float:
    """First-order propagation of per-entry error bounds to max |dq|.

    The coefficients are rational in the eta entries, so a one-sided finite
    difference per entry gives the sensitivity; the reported figure is
    sum_e |dq/d eta_e| * bound_e, maximised over the three coefficients.
    """
    total = [0.0, 0.0, 0.0]
    base = dict(table.entries)
    for idx, entry in table.entries.items():
        bound = float(entry.abs_error_bound)
        if bound == 0.0:
            continue
        h = 1e-6 * max(1.0, abs(float(entry.value)))
        bumped = dict(base)
        bumped[idx] = EtaEntry(entry.value + h, entry.abs_error_bound, entry.method)
        t2 = EtaTable(table.model_label, bumped, exact=False)
        lt = l_terms(t2, agg)
        gi = geometric_invariants(lt, agg.p)
        q1 = _q_from_invariants(gi, agg.p)
        for c in range(3):
            total[c] += abs(float(q1[c]) - float(q0[c])) / h * bound
    return max(total)


def build_risk_expansion(model_or_table, moments, tol: float = 1e-10) -> RiskExpansion:
    """Convenience wrapper accepting either an ErrorModel or a ready table."""
    from .eta import build_eta_table  # local import to avoid a cycle at import time

    table = model_or_table
    if not isinstance(model_or_table, EtaTable):
        table = build_eta_table(model_or_table, tol=tol)
    return risk_expansion(table, moments)
