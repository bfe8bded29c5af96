"""Exact multivariate rational functions over a table of named parameters.

Monomials are packed into a single Python int, ``EXP_BITS`` bits per
parameter (parameter ``i`` occupies bits ``[i*EXP_BITS, (i+1)*EXP_BITS)``),
so monomial multiplication is integer addition.  Polynomials are sparse
``{monomial: coefficient}`` maps.

A :class:`RationalFunction` keeps its denominator as a positive integer
constant times a multiset of primitive polynomial factors.  Sums take the
lcm of the two factor multisets instead of the full product, which keeps
state elimination from squaring the denominator at every step.  No
polynomial gcd is ever computed; two functions are compared semantically
by evaluating them at random points.
"""
from __future__ import annotations

import math
import re
from fractions import Fraction
from functools import reduce
from typing import Iterable, Mapping, Sequence

EXP_BITS = 16
_FIELD = (1 << EXP_BITS) - 1

Number = int | Fraction


class RatFunError(Exception):
    pass


class DivisionByZeroFunction(RatFunError, ZeroDivisionError):
    pass


class EvalDenominatorZero(RatFunError, ZeroDivisionError):
    pass


class MissingParameter(RatFunError, KeyError):
    pass


class ExpressionSyntaxError(RatFunError, ValueError):
    pass


class UndeclaredParameter(RatFunError, KeyError):
    pass


# ---------------------------------------------------------------------------
# parameters and monomials


class ParamTable:
    """Ordered, duplicate-free parameter names; a name's id is its position."""

    __slots__ = ("_names", "_index")

    def __init__(self, names: Iterable[str] = ()):
        self._names: tuple[str, ...] = tuple(names)
        self._index = {}
        for i, name in enumerate(self._names):
            if not isinstance(name, str) or not name:
                raise ValueError(f"invalid parameter name {name!r}")
            if name in self._index:
                raise ValueError(f"duplicate parameter name {name!r}")
            self._index[name] = i

    @property
    def names(self) -> tuple[str, ...]:
        return self._names

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UndeclaredParameter(name) from None

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self._names)

    def __iter__(self):
        return iter(self._names)

    def __getitem__(self, i: int) -> str:
        return self._names[i]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ParamTable) and self._names == other._names

    def __hash__(self) -> int:
        return hash(self._names)

    def __repr__(self) -> str:
        return f"ParamTable({list(self._names)!r})"

    def extend(self, names: Iterable[str]) -> "ParamTable":
        return ParamTable(self._names + tuple(names))


def make_monomial(exponents: Mapping[int, int]) -> int:
    m = 0
    for var, e in exponents.items():
        if e < 0 or e > _FIELD:
            raise ValueError(f"exponent {e} out of range")
        if e:
            m += e << (var * EXP_BITS)
    return m


def monomial_exponents(m: int) -> dict[int, int]:
    """Decode a packed monomial into ``{param id: exponent}`` (zeros omitted)."""
    out = {}
    while m:
        low = (m & -m).bit_length() - 1
        var = low // EXP_BITS
        shift = var * EXP_BITS
        e = (m >> shift) & _FIELD
        out[var] = e
        m -= e << shift
    return out


def monomial_degree(m: int) -> int:
    return sum(monomial_exponents(m).values())


# ---------------------------------------------------------------------------
# polynomials


class Polynomial:
    """Sparse polynomial with exact (int or Fraction) coefficients.

    Treated as immutable once built; arithmetic returns new objects.
    """

    __slots__ = ("terms", "_hash", "_decoded")

    def __init__(self, terms: Mapping[int, Number] | None = None, _trusted: bool = False):
        if terms is None:
            self.terms: dict[int, Number] = {}
        elif _trusted:
            self.terms = terms  # type: ignore[assignment]
        else:
            self.terms = {m: c for m, c in terms.items() if c}
        self._hash = None
        self._decoded = None

    # -- constructors
    @classmethod
    def constant(cls, c: Number) -> "Polynomial":
        return cls({0: c} if c else {}, _trusted=True)

    @classmethod
    def variable(cls, var: int) -> "Polynomial":
        return cls({1 << (var * EXP_BITS): 1}, _trusted=True)

    # -- queries
    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return not self.terms or (len(self.terms) == 1 and 0 in self.terms)

    def constant_value(self) -> Number:
        return self.terms.get(0, 0)

    def __len__(self) -> int:
        return len(self.terms)

    def variables(self) -> set[int]:
        out: set[int] = set()
        for m in self.terms:
            out.update(monomial_exponents(m))
        return out

    def degree(self) -> int:
        return max((monomial_degree(m) for m in self.terms), default=0)

    def leading_term(self) -> tuple[int, Number]:
        if not self.terms:
            raise ValueError("zero polynomial has no leading term")
        m = max(self.terms, key=grlex_key_cached)
        return m, self.terms[m]

    def sorted_terms(self) -> list[tuple[int, Number]]:
        """Terms in descending graded-lex order."""
        return sorted(self.terms.items(), key=lambda t: grlex_key_cached(t[0]), reverse=True)

    def content(self) -> Fraction:
        """Positive rational c with self/c having coprime integer coefficients."""
        if not self.terms:
            return Fraction(0)
        nums = []
        dens = []
        for c in self.terms.values():
            c = Fraction(c)
            nums.append(abs(c.numerator))
            dens.append(c.denominator)
        return Fraction(reduce(math.gcd, nums), reduce(_lcm, dens))

    # -- arithmetic
    def __eq__(self, other: object) -> bool:
        if isinstance(other, Polynomial):
            return self.terms == other.terms
        if isinstance(other, (int, Fraction)):
            return self.terms == ({0: other} if other else {})
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    def __neg__(self) -> "Polynomial":
        return Polynomial({m: -c for m, c in self.terms.items()}, _trusted=True)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(other)
        if len(other.terms) > len(self.terms):
            self, other = other, self
        out = dict(self.terms)
        for m, c in other.terms.items():
            v = out.get(m, 0) + c
            if v:
                out[m] = v
            else:
                out.pop(m, None)
        return Polynomial(out, _trusted=True)

    __radd__ = __add__

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            v = out.get(m, 0) - c
            if v:
                out[m] = v
            else:
                out.pop(m, None)
        return Polynomial(out, _trusted=True)

    def __rsub__(self, other):
        return Polynomial.constant(other) - self

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        if not isinstance(other, Polynomial):
            return self.scale(other)
        a, b = self.terms, other.terms
        if not a or not b:
            return Polynomial()
        if len(a) < len(b):
            a, b = b, a
        if len(b) == 1:
            (mb, cb), = b.items()
            return Polynomial({ma + mb: ca * cb for ma, ca in a.items()}, _trusted=True)
        out: dict[int, Number] = {}
        get = out.get
        for mb, cb in b.items():
            for ma, ca in a.items():
                m = ma + mb
                out[m] = get(m, 0) + ca * cb
        return Polynomial({m: c for m, c in out.items() if c}, _trusted=True)

    __rmul__ = __mul__

    def scale(self, c: Number) -> "Polynomial":
        if not c:
            return Polynomial()
        if c == 1:
            return self
        return Polynomial({m: v * c for m, v in self.terms.items()}, _trusted=True)

    def exact_div_scalar(self, c: int) -> "Polynomial":
        return Polynomial({m: v // c for m, v in self.terms.items()}, _trusted=True)

    def __pow__(self, n: int) -> "Polynomial":
        if n < 0:
            raise ValueError("negative power")
        result = Polynomial.constant(1)
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    # -- evaluation
    def _decode(self):
        if self._decoded is None:
            self._decoded = [(c, tuple(monomial_exponents(m).items())) for m, c in self.terms.items()]
        return self._decoded

    def evaluate(self, point: Mapping[int, Fraction]) -> Fraction:
        """Exact value at ``point``; integer arithmetic over a common denominator."""
        decoded = self._decode()
        if not decoded:
            return Fraction(0)
        maxdeg: dict[int, int] = {}
        for _, exps in decoded:
            for var, e in exps:
                if e > maxdeg.get(var, 0):
                    maxdeg[var] = e
        nums: dict[int, list[int]] = {}
        dens: dict[int, list[int]] = {}
        common = 1
        for var, d in maxdeg.items():
            try:
                v = point[var]
            except KeyError:
                raise MissingParameter(var) from None
            v = Fraction(v)
            n_pows = [1]
            d_pows = [1]
            for _ in range(d):
                n_pows.append(n_pows[-1] * v.numerator)
                d_pows.append(d_pows[-1] * v.denominator)
            nums[var] = n_pows
            dens[var] = d_pows
            common *= d_pows[d]
        total = 0
        coeff_den = 1
        for c, exps in decoded:
            if isinstance(c, Fraction):
                coeff_den = _lcm(coeff_den, c.denominator)
        for c, exps in decoded:
            t = c * coeff_den
            if isinstance(t, Fraction):
                t = t.numerator
            for var, e in exps:
                t *= nums[var][e] * dens[var][maxdeg[var] - e]
            rest = 1
            for var, d in maxdeg.items():
                if not any(v == var for v, _ in exps):
                    rest *= dens[var][d]
            total += t * rest
        return Fraction(total, common * coeff_den)

    # -- rendering
    def to_string(self, params: ParamTable | Sequence[str] | None = None) -> str:
        if not self.terms:
            return "0"
        parts = []
        for m, c in self.sorted_terms():
            neg = c < 0
            mag = -c if neg else c
            factors = []
            for var, e in sorted(monomial_exponents(m).items()):
                name = params[var] if params is not None else f"x{var}"
                factors.append(name if e == 1 else f"{name}^{e}")
            if mag != 1 or not factors:
                factors.insert(0, _fmt_coeff(mag))
            body = "*".join(factors)
            if not parts:
                parts.append(("-" if neg else "") + body)
            else:
                parts.append((" - " if neg else " + ") + body)
        return "".join(parts)

    def __repr__(self) -> str:
        return f"Polynomial({self.to_string()})"

    def op_count(self) -> int:
        return _poly_op_count(self)


_GRLEX_CACHE: dict[int, tuple] = {}


def grlex_key_cached(m: int) -> tuple:
    """Sort key for graded-lex order with parameter 0 the most significant."""
    key = _GRLEX_CACHE.get(m)
    if key is None:
        exps = monomial_exponents(m)
        key = (sum(exps.values()), _lex_vector(exps))
        if len(_GRLEX_CACHE) > 500_000:
            _GRLEX_CACHE.clear()
        _GRLEX_CACHE[m] = key
    return key


def _lex_vector(exps: dict[int, int]) -> tuple:
    out = []
    prev = -1
    for var in sorted(exps):
        out.extend([0] * (var - prev - 1))
        out.append(exps[var])
        prev = var
    return tuple(out)


def _fmt_coeff(c: Number) -> str:
    c = Fraction(c)
    if c.denominator == 1:
        return str(c.numerator)
    return f"{c.numerator}/{c.denominator}"


def _lcm(a: int, b: int) -> int:
    return a // math.gcd(a, b) * b


def _poly_op_count(p: Polynomial) -> int:
    if not p.terms:
        return 0
    ops = len(p.terms) - 1
    for m, c in p.terms.items():
        degree = monomial_degree(m)
        mults = max(degree - 1, 0)
        if m != 0 and abs(c) != 1:
            mults += 1
        ops += mults
    return ops


def _primitive(p: Polynomial) -> tuple[Fraction, Polynomial]:
    """Split ``p`` into ``(k, q)`` with ``p == k*q``, ``q`` integer-primitive with
    positive graded-lex leading coefficient."""
    k = p.content()
    _, lc = p.leading_term()
    if lc < 0:
        k = -k
    if k == 1:
        q = p
        if any(isinstance(c, Fraction) for c in p.terms.values()):
            q = Polynomial({m: int(c) for m, c in p.terms.items()}, _trusted=True)
        return k, q
    q = Polynomial({m: _as_int(Fraction(c) / k) for m, c in p.terms.items()}, _trusted=True)
    return k, q


def _as_int(c: Fraction) -> int:
    if c.denominator != 1:
        raise AssertionError("non-integral coefficient after content removal")
    return c.numerator


# ---------------------------------------------------------------------------
# rational functions


class RationalFunction:
    """``num / (den_const * prod(f**k for f, k in den_factors))``.

    Canonical form: ``num`` has integer coefficients, ``den_const`` is a
    positive int coprime with the content of ``num``, and every denominator
    factor is a non-constant primitive integer polynomial whose graded-lex
    leading coefficient is positive.  The zero function is ``0/1``.
    """

    __slots__ = ("num", "den_const", "den_factors", "_den")

    def __init__(self, num: Polynomial, den_const: int = 1,
                 den_factors: Mapping[Polynomial, int] | None = None, _canonical: bool = False):
        if _canonical:
            self.num = num
            self.den_const = den_const
            self.den_factors = dict(den_factors or {})
            self._den = None
            return
        if den_const == 0:
            raise DivisionByZeroFunction("zero denominator")
        factors: dict[Polynomial, int] = {}
        scale = Fraction(1, 1) / Fraction(den_const)
        for f, k in (den_factors or {}).items():
            if k <= 0:
                continue
            if f.is_zero():
                raise DivisionByZeroFunction("zero denominator factor")
            if f.is_constant():
                scale /= Fraction(f.constant_value()) ** k
                continue
            c, q = _primitive(f)
            scale /= c ** k
            factors[q] = factors.get(q, 0) + k
        self.num, self.den_const = _normalize_num(num.scale(scale) if scale != 1 else num)
        self.den_factors = factors if not self.num.is_zero() else {}
        self._den = None

    # -- constructors
    @classmethod
    def constant(cls, c: Number) -> "RationalFunction":
        return cls(Polynomial.constant(Fraction(c)))

    @classmethod
    def variable(cls, var: int) -> "RationalFunction":
        return cls(Polynomial.variable(var), _canonical=True)

    @classmethod
    def from_polynomials(cls, num: Polynomial, den: Polynomial) -> "RationalFunction":
        if den.is_zero():
            raise DivisionByZeroFunction("denominator is the zero polynomial")
        return cls(num, 1, {den: 1})

    # -- views
    @property
    def numerator(self) -> Polynomial:
        return self.num

    @property
    def denominator(self) -> Polynomial:
        """Expanded denominator polynomial."""
        if self._den is None:
            d = Polynomial.constant(self.den_const)
            for f, k in self.sorted_factors():
                d = d * f ** k
            self._den = d
        return self._den

    def sorted_factors(self) -> list[tuple[Polynomial, int]]:
        return sorted(self.den_factors.items(), key=lambda fk: _factor_key(fk[0]))

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def is_constant(self) -> bool:
        return self.num.is_constant() and not self.den_factors

    def is_polynomial(self) -> bool:
        return not self.den_factors

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise ValueError("not a constant function")
        return Fraction(self.num.constant_value()) / self.den_const

    def variables(self) -> set[int]:
        out = self.num.variables()
        for f in self.den_factors:
            out |= f.variables()
        return out

    def structurally_equal(self, other: "RationalFunction") -> bool:
        return (self.num == other.num and self.den_const == other.den_const
                and self.den_factors == other.den_factors)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, Fraction)):
            return self.is_constant() and self.constant_value() == other
        if isinstance(other, RationalFunction):
            return self.structurally_equal(other)
        return NotImplemented

    def __hash__(self) -> int:
        return hash((self.num, self.den_const, frozenset(self.den_factors.items())))

    # -- arithmetic
    def __neg__(self) -> "RationalFunction":
        return RationalFunction(-self.num, self.den_const, self.den_factors, _canonical=True)

    def __add__(self, other) -> "RationalFunction":
        return rf_add(self, _coerce(other))

    __radd__ = __add__

    def __sub__(self, other) -> "RationalFunction":
        return rf_sub(self, _coerce(other))

    def __rsub__(self, other) -> "RationalFunction":
        return rf_sub(_coerce(other), self)

    def __mul__(self, other) -> "RationalFunction":
        return rf_mul(self, _coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "RationalFunction":
        return rf_div(self, _coerce(other))

    def __rtruediv__(self, other) -> "RationalFunction":
        return rf_div(_coerce(other), self)

    def evaluate(self, point: Mapping[int, Fraction]) -> Fraction:
        return rf_eval(self, point)

    def op_count(self) -> int:
        return rf_op_count(self)

    def to_string(self, params: ParamTable | Sequence[str] | None = None) -> str:
        return rf_render(self, params)

    def __repr__(self) -> str:
        return f"RationalFunction({self.to_string()})"

    def __reduce__(self):
        return (_rebuild_rf, (self.num.terms, self.den_const,
                              [(f.terms, k) for f, k in self.den_factors.items()]))


def _rebuild_rf(num_terms, den_const, factors):
    return RationalFunction(Polynomial(num_terms, _trusted=True), den_const,
                            {Polynomial(t, _trusted=True): k for t, k in factors}, _canonical=True)


def _factor_key(f: Polynomial):
    return (len(f.terms), f.leading_term()[0].bit_length(), sorted(f.terms.items()))


def _coerce(x) -> RationalFunction:
    if isinstance(x, RationalFunction):
        return x
    if isinstance(x, (int, Fraction)):
        return RationalFunction.constant(x)
    raise TypeError(f"cannot coerce {type(x).__name__} to RationalFunction")


def _normalize_num(num: Polynomial) -> tuple[Polynomial, int]:
    """Scale a rational-coefficient numerator to integers; returns (num, den_const)."""
    if num.is_zero():
        return num, 1
    k = num.content()
    # num / den_const with integer primitive-scaled numerator
    if k == 1 and all(type(c) is int for c in num.terms.values()):
        return num, 1
    n = Polynomial({m: _as_int(Fraction(c) / k) for m, c in num.terms.items()}, _trusted=True)
    return n.scale(k.numerator), k.denominator


def _build(num: Polynomial, den_const: int, factors: dict[Polynomial, int]) -> RationalFunction:
    """Canonicalise given integer ``num``, positive int ``den_const`` and
    already-primitive factors."""
    if num.is_zero():
        return RationalFunction(Polynomial(), 1, {}, _canonical=True)
    if any(type(c) is not int for c in num.terms.values()):
        num, extra = _normalize_num(num)
        den_const *= extra
    g = math.gcd(reduce(math.gcd, (abs(c) for c in num.terms.values())), den_const)
    if g != 1:
        num = num.exact_div_scalar(g)
        den_const //= g
    return RationalFunction(num, den_const, {f: k for f, k in factors.items() if k > 0}, _canonical=True)


def rf_add(a: RationalFunction, b: RationalFunction) -> RationalFunction:
    """Sum over the lcm of the two factor multisets (no polynomial gcd)."""
    if a.is_zero():
        return b
    if b.is_zero():
        return a
    fa, fb = a.den_factors, b.den_factors
    lcm_factors = dict(fa)
    for f, k in fb.items():
        if k > lcm_factors.get(f, 0):
            lcm_factors[f] = k
    c = _lcm(a.den_const, b.den_const)
    na = a.num.scale(c // a.den_const)
    for f, k in lcm_factors.items():
        extra = k - fa.get(f, 0)
        if extra:
            na = na * f ** extra
    nb = b.num.scale(c // b.den_const)
    for f, k in lcm_factors.items():
        extra = k - fb.get(f, 0)
        if extra:
            nb = nb * f ** extra
    return _build(na + nb, c, lcm_factors)


def rf_sub(a: RationalFunction, b: RationalFunction) -> RationalFunction:
    return rf_add(a, -b)


def rf_mul(a: RationalFunction, b: RationalFunction) -> RationalFunction:
    if a.is_zero() or b.is_zero():
        return RationalFunction(Polynomial(), 1, {}, _canonical=True)
    factors = dict(a.den_factors)
    for f, k in b.den_factors.items():
        factors[f] = factors.get(f, 0) + k
    return _build(a.num * b.num, a.den_const * b.den_const, factors)


def rf_div(a: RationalFunction, b: RationalFunction) -> RationalFunction:
    if b.is_zero():
        raise DivisionByZeroFunction("division by the zero function")
    if a.is_zero():
        return a
    # a / b = a.num * b.den_const * prod(b.factors) / (a.den_const * prod(a.factors) * b.num)
    factors = dict(a.den_factors)
    num = a.num
    for f, k in b.den_factors.items():
        have = factors.get(f, 0)
        cancel = min(have, k)
        if cancel:
            if have == cancel:
                del factors[f]
            else:
                factors[f] = have - cancel
        if k > cancel:
            num = num * f ** (k - cancel)
    num = num.scale(b.den_const)
    den_const = a.den_const
    if b.num.is_constant():
        cb = Fraction(b.num.constant_value())
        num = num.scale(Fraction(1) / cb)
        return _build_signed(num, den_const, factors)
    kb, qb = _primitive(b.num)
    # divide by kb * qb
    num = num.scale(Fraction(1) / kb)
    factors[qb] = factors.get(qb, 0) + 1
    return _build_signed(num, den_const, factors)


def _build_signed(num: Polynomial, den_const: int, factors: dict[Polynomial, int]) -> RationalFunction:
    if any(type(c) is not int for c in num.terms.values()):
        num, extra = _normalize_num(num)
        den_const *= extra
    return _build(num, den_const, factors)


def rf_eval(f: RationalFunction, point: Mapping[int, Number]) -> Fraction:
    """Exact value of ``f`` at ``point`` (param id -> rational)."""
    den = Fraction(f.den_const)
    for q, k in f.den_factors.items():
        den *= q.evaluate(point) ** k
    if den == 0:
        raise EvalDenominatorZero("denominator vanishes at the given point")
    if f.num.is_zero():
        return Fraction(0)
    return f.num.evaluate(point) / den


def rf_op_count(f: RationalFunction) -> int:
    """Arithmetic operations needed to evaluate ``f`` as rendered.

    Additions/subtractions between terms, exponent ``k`` costs ``k-1``
    multiplications, a coefficient other than +-1 costs one more, and a
    non-trivial denominator costs one division.  A factored denominator is
    counted as rendered: the factors' own operations plus the products
    joining them (and the integer constant, when it is not 1).
    """
    ops = _poly_op_count(f.num)
    if f.num.is_constant() and not f.den_factors:
        return 0
    if f.den_factors or f.den_const != 1:
        pieces = sum(f.den_factors.values()) + (1 if f.den_const != 1 else 0)
        ops += sum(_poly_op_count(q) * k for q, k in f.den_factors.items())
        ops += pieces - 1
        ops += 1
    return ops


def rf_render(f: RationalFunction, params: ParamTable | Sequence[str] | None = None) -> str:
    num = f.num.to_string(params)
    if not f.den_factors and f.den_const == 1:
        return num
    if not f.den_factors:
        if f.num.is_constant():
            return _fmt_coeff(Fraction(f.num.constant_value(), f.den_const))
        return f"({num})/({f.den_const})"
    pieces = []
    if f.den_const != 1:
        pieces.append(str(f.den_const))
    for q, k in f.sorted_factors():
        pieces.extend([f"({q.to_string(params)})"] * k)
    return f"({num})/({'*'.join(pieces)})"


def rf_substitute(f: RationalFunction, values: Mapping[int, Number],
                  remap: Mapping[int, int] | None = None) -> RationalFunction:
    """Replace the parameters in ``values`` by constants; renumber the rest via ``remap``."""
    def sub_poly(p: Polynomial) -> Polynomial:
        out: dict[int, Number] = {}
        for m, c in p.terms.items():
            coeff = Fraction(c)
            exps = {}
            for var, e in monomial_exponents(m).items():
                if var in values:
                    coeff *= Fraction(values[var]) ** e
                else:
                    exps[remap[var] if remap is not None else var] = e
            key = make_monomial(exps)
            out[key] = out.get(key, 0) + coeff
        return Polynomial(out)

    num = sub_poly(f.num)
    den = RationalFunction.constant(f.den_const)
    for q, k in f.den_factors.items():
        sq = sub_poly(q)
        if sq.is_zero():
            raise EvalDenominatorZero("denominator factor vanishes after substitution")
        den = rf_mul(den, rf_pow(RationalFunction(sq), k))
    return rf_div(RationalFunction(num), den)


def rf_pow(f: RationalFunction, k: int) -> RationalFunction:
    out = RationalFunction.constant(1)
    for _ in range(k):
        out = rf_mul(out, f)
    return out


def rf_compose(f: RationalFunction, replacements: Mapping[int, RationalFunction]) -> RationalFunction:
    """Substitute rational functions for parameters (used to inline formulas)."""
    def sub_poly(p: Polynomial) -> RationalFunction:
        acc = RationalFunction.constant(0)
        cache: dict[tuple[int, int], RationalFunction] = {}
        for m, c in p.terms.items():
            term = RationalFunction.constant(c)
            for var, e in monomial_exponents(m).items():
                if var in replacements:
                    key = (var, e)
                    if key not in cache:
                        cache[key] = rf_pow(replacements[var], e)
                    term = rf_mul(term, cache[key])
                else:
                    term = rf_mul(term, RationalFunction(Polynomial({e << (var * EXP_BITS): 1})))
            acc = rf_add(acc, term)
        return acc

    result = sub_poly(f.num)
    den = RationalFunction.constant(f.den_const)
    for q, k in f.den_factors.items():
        den = rf_mul(den, rf_pow(sub_poly(q), k))
    return rf_div(result, den)


def rf_equal_at(f: RationalFunction, g: RationalFunction, points: Iterable[Mapping[int, Fraction]]) -> bool:
    return all(rf_eval(f, p) == rf_eval(g, p) for p in points)


# ---------------------------------------------------------------------------
# expression parsing

_TOKEN = re.compile(r"\s*(?:(\d+(?:\.\d*)?|\.\d+)|([A-Za-z_][A-Za-z0-9_]*)|(\*\*|[-+*/^()]))")


def parse_expr(text: str, params: ParamTable) -> RationalFunction:
    """Parse an arithmetic expression over ``params`` into a rational function.

    Accepts ``+ - * / ^ ( )``, decimal or integer constants and parameter
    names; ``a/b`` between constants is an exact fraction.
    """
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r} at column {pos + 1}")
        if m.group(1) is not None:
            tokens.append(("num", m.group(1)))
        elif m.group(2) is not None:
            tokens.append(("name", m.group(2)))
        else:
            tokens.append(("op", "^" if m.group(3) == "**" else m.group(3)))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    parser = _ExprParser(tokens, params)
    result = parser.expr()
    if parser.i != len(tokens):
        raise ExpressionSyntaxError(f"unexpected token {tokens[parser.i][1]!r}")
    return _to_rf(result)


class _Prod:
    # unexpanded product of polynomials, so a factored denominator keeps its factors
    __slots__ = ("factors",)

    def __init__(self, factors):
        self.factors = factors

    def expand(self) -> Polynomial:
        out = Polynomial.constant(1)
        for f in self.factors:
            out = out * f
        return out


def _factors(v):
    return v.factors if isinstance(v, _Prod) else [v]


class _ExprParser:
    # Polynomial-valued sub-expressions stay as Polynomial until a division
    # by a non-constant forces a RationalFunction.

    def __init__(self, tokens, params: ParamTable):
        self.tokens = tokens
        self.params = params
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expr(self):
        value = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            rhs = self.term()
            value = _lift_add(value, rhs) if op == "+" else _lift_add(value, _lift_neg(rhs))
        return value

    def term(self):
        value = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            rhs = self.unary()
            value = _lift_mul(value, rhs) if op == "*" else _lift_div(value, rhs)
        return value

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            return _lift_neg(self.unary())
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            kind, tok = self.take()
            if kind != "num" or not tok.isdigit():
                raise ExpressionSyntaxError("exponent must be a non-negative integer")
            n = int(tok)
            if isinstance(base, Polynomial):
                return base ** n
            if isinstance(base, _Prod):
                return _Prod(base.factors * n)
            return rf_pow(base, n)
        return base

    def atom(self):
        kind, tok = self.take()
        if kind == "num":
            return Polynomial.constant(Fraction(tok))
        if kind == "name":
            return Polynomial.variable(self.params.index(tok))
        if (kind, tok) == ("op", "("):
            inner = self.expr()
            if self.take() != ("op", ")"):
                raise ExpressionSyntaxError("missing closing parenthesis")
            if isinstance(inner, RationalFunction) and inner.is_polynomial() and inner.den_const == 1:
                return inner.num
            return inner
        raise ExpressionSyntaxError("unexpected end of expression" if kind is None else f"unexpected token {tok!r}")


def _to_rf(v) -> RationalFunction:
    if isinstance(v, _Prod):
        v = v.expand()
    return RationalFunction(v) if isinstance(v, Polynomial) else v


def _poly(v):
    return v.expand() if isinstance(v, _Prod) else v


def _lift_add(a, b):
    a, b = _poly(a), _poly(b)
    if isinstance(a, Polynomial) and isinstance(b, Polynomial):
        return a + b
    return rf_add(_to_rf(a), _to_rf(b))


def _lift_neg(a):
    if isinstance(a, _Prod):
        return _Prod([Polynomial.constant(-1)] + a.factors)
    return -a


def _lift_mul(a, b):
    if isinstance(a, (Polynomial, _Prod)) and isinstance(b, (Polynomial, _Prod)):
        return _Prod(_factors(a) + _factors(b))
    return rf_mul(_to_rf(a), _to_rf(b))


def _lift_div(a, b):
    b = b.expand() if isinstance(b, _Prod) and all(f.is_constant() for f in b.factors) else b
    if isinstance(b, Polynomial) and b.is_constant():
        c = b.constant_value()
        if c == 0:
            raise DivisionByZeroFunction("division by zero constant")
        if isinstance(a, (Polynomial, _Prod)):
            return _poly(a).scale(Fraction(1) / Fraction(c))
    if isinstance(b, _Prod):
        # divide factor by factor so each stays a separate denominator factor
        out = _to_rf(a)
        for f in b.factors:
            out = rf_div(out, RationalFunction(f))
        return out
    return rf_div(_to_rf(a), _to_rf(b))
