"""Structural phenotype models Y(g, x, e) as small expression trees.

Grammar (operators +, -, *, constants, one outermost ``ind(...)``):

    expr   := term (('+' | '-') term)*
    term   := unary ('*' unary)*
    unary  := '-' unary | atom
    atom   := NUMBER | NAME | 'ind' '(' expr ')' | '(' expr ')'

Model-spec files are UTF-8 text, one declaration per line:

    mode = population | within_family          # optional, default population
    symbol <name> : <role> ~ <distribution>    # role: genotype | observed_env | latent_env
    symbol <name> : derived = <expr>           # within_family only
    phenotype = <expr>
    # comments and blank lines are ignored

Distributions: ``normal(mean, variance)``, ``bernoulli(p)``, ``hwe(p)``,
``discrete(v:p, v:p, ...)``.  In within_family mode every genotype symbol
``g`` makes the parental dosages ``gf`` and ``gm`` available to derived
expressions (e.g. ``symbol x1 : derived = (g1f + g1m) * 0.5``).
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

from .errors import ModelSyntaxError, ModelValidationError
from .genetics import AlleleFrequency, hwe_dist

ROLE_GENOTYPE = "genotype"
ROLE_OBSERVED = "observed_env"
ROLE_LATENT = "latent_env"
ROLE_DERIVED = "derived"
ROLES = (ROLE_GENOTYPE, ROLE_OBSERVED, ROLE_LATENT, ROLE_DERIVED)

MODE_POPULATION = "population"
MODE_WITHIN_FAMILY = "within_family"

ENGINE_LINEAR = "linear-gaussian"
ENGINE_PROBIT = "probit-gaussian"
ENGINE_MC = "general-mc"


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Sym:
    name: str


@dataclass(frozen=True)
class Add:
    left: object
    right: object


@dataclass(frozen=True)
class Sub:
    left: object
    right: object


@dataclass(frozen=True)
class Mul:
    left: object
    right: object


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class Ind:
    """Indicator 1{arg > 0}; strict inequality, ties count as 0."""

    arg: object


def expr_symbols(e) -> set[str]:
    if isinstance(e, Const):
        return set()
    if isinstance(e, Sym):
        return {e.name}
    if isinstance(e, (Add, Sub, Mul)):
        return expr_symbols(e.left) | expr_symbols(e.right)
    if isinstance(e, (Neg, Ind)):
        return expr_symbols(e.arg)
    raise TypeError(f"not an expression node: {e!r}")


def evaluate_expr(e, env):
    """Evaluate an expression under ``env``; works on scalars and arrays."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Sym):
        try:
            return env[e.name]
        except KeyError:
            raise ModelValidationError(f"no value for symbol '{e.name}'") from None
    if isinstance(e, Add):
        return evaluate_expr(e.left, env) + evaluate_expr(e.right, env)
    if isinstance(e, Sub):
        return evaluate_expr(e.left, env) - evaluate_expr(e.right, env)
    if isinstance(e, Mul):
        return evaluate_expr(e.left, env) * evaluate_expr(e.right, env)
    if isinstance(e, Neg):
        return -evaluate_expr(e.arg, env)
    if isinstance(e, Ind):
        v = evaluate_expr(e.arg, env)
        try:
            return (v > 0) * 1.0
        except TypeError:
            return 1.0 if v > 0 else 0.0
    raise TypeError(f"not an expression node: {e!r}")


def _fmt_num(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def print_expr(e, _prec: int = 0) -> str:
    """Canonical text form; parse(print_expr(e)) is structurally equal to e."""
    if isinstance(e, Const):
        s = _fmt_num(e.value)
        return f"({s})" if e.value < 0 and _prec > 0 else s
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Add):
        s = f"{print_expr(e.left, 1)} + {print_expr(e.right, 1)}"
        return f"({s})" if _prec > 1 else s
    if isinstance(e, Sub):
        s = f"{print_expr(e.left, 1)} - {print_expr(e.right, 2)}"
        return f"({s})" if _prec > 1 else s
    if isinstance(e, Mul):
        s = f"{print_expr(e.left, 2)}*{print_expr(e.right, 3)}"
        return f"({s})" if _prec > 2 else s
    if isinstance(e, Neg):
        s = f"-{print_expr(e.arg, 3)}"
        return f"({s})" if _prec > 1 else s
    if isinstance(e, Ind):
        return f"ind({print_expr(e.arg, 0)})"
    raise TypeError(f"not an expression node: {e!r}")


def monomials(e) -> dict[tuple[str, ...], float]:
    """Multilinear expansion: map (sorted symbol tuple with multiplicity) -> coefficient.

    The indicator node is rejected; expand its argument instead.
    """
    if isinstance(e, Const):
        return {(): e.value}
    if isinstance(e, Sym):
        return {(e.name,): 1.0}
    if isinstance(e, Add):
        out = dict(monomials(e.left))
        for k, v in monomials(e.right).items():
            out[k] = out.get(k, 0.0) + v
        return out
    if isinstance(e, Sub):
        out = dict(monomials(e.left))
        for k, v in monomials(e.right).items():
            out[k] = out.get(k, 0.0) - v
        return out
    if isinstance(e, Neg):
        return {k: -v for k, v in monomials(e.arg).items()}
    if isinstance(e, Mul):
        out: dict[tuple[str, ...], float] = {}
        right = monomials(e.right)
        for ka, va in monomials(e.left).items():
            for kb, vb in right.items():
                key = tuple(sorted(ka + kb))
                out[key] = out.get(key, 0.0) + va * vb
        return out
    if isinstance(e, Ind):
        raise ModelValidationError("indicator inside an arithmetic context")
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# Tokenizer / expression parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*():~,=]))"
)


def _tokenize(text: str, line: int = 1):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:].strip()
            if not rest:
                break
            raise ModelSyntaxError(f"unexpected character {rest[0]!r}", line, pos + 1)
        if m.lastgroup == "num":
            tokens.append(("num", float(m.group("num")), m.start("num") + 1))
        elif m.lastgroup == "name":
            tokens.append(("name", m.group("name"), m.start("name") + 1))
        else:
            tokens.append(("op", m.group("op"), m.start("op") + 1))
        pos = m.end()
    tokens.append(("end", None, len(text) + 1))
    return tokens


class _ExprParser:
    def __init__(self, tokens, line):
        self.tokens = tokens
        self.i = 0
        self.line = line

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect_op(self, op):
        kind, val, col = self.take()
        if kind != "op" or val != op:
            raise ModelSyntaxError(f"expected '{op}', got {val!r}", self.line, col)

    def parse(self):
        e = self.expr()
        kind, val, col = self.peek()
        if kind != "end":
            raise ModelSyntaxError(f"trailing input {val!r}", self.line, col)
        return e

    def expr(self):
        e = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                rhs = self.term()
                e = Add(e, rhs) if val == "+" else Sub(e, rhs)
            else:
                return e

    def term(self):
        e = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val == "*":
                self.take()
                e = Mul(e, self.unary())
            else:
                return e

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Neg(self.unary())
        return self.atom()

    def atom(self):
        kind, val, col = self.take()
        if kind == "num":
            return Const(val)
        if kind == "name":
            nk, nv, _ = self.peek()
            if nk == "op" and nv == "(":
                if val != "ind":
                    raise ModelSyntaxError(f"unknown function '{val}'", self.line, col)
                self.take()
                inner = self.expr()
                self.expect_op(")")
                return Ind(inner)
            return Sym(val)
        if kind == "op" and val == "(":
            inner = self.expr()
            self.expect_op(")")
            return inner
        raise ModelSyntaxError(f"unexpected token {val!r}", self.line, col)


def parse_expr(text: str, line: int = 1):
    return _ExprParser(_tokenize(text, line), line).parse()


# ---------------------------------------------------------------------------
# Distributions and symbol bindings
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DistributionSpec:
    """One of normal(mean, variance), bernoulli(p), hwe(p), discrete(v:p, ...)."""

    kind: str
    params: tuple[float, ...] = ()
    values: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind == "normal":
            mean, var = self.params
            if var < 0:
                raise ModelValidationError(f"normal variance must be >= 0, got {var}")
        elif self.kind in ("bernoulli", "hwe"):
            (p,) = self.params
            if not (0.0 <= p <= 1.0):
                raise ModelValidationError(f"{self.kind} probability must lie in [0, 1], got {p}")
        elif self.kind == "discrete":
            if len(self.values) != len(self.probs) or not self.values:
                raise ModelValidationError("discrete needs matching value:prob pairs")
            if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-9:
                raise ModelValidationError("discrete probabilities must be >= 0 and sum to 1")
            if any(b <= a for a, b in zip(self.values, self.values[1:])):
                raise ModelValidationError("discrete support must be strictly increasing")
        else:
            raise ModelValidationError(f"unknown distribution kind '{self.kind}'")

    # --- discrete view -----------------------------------------------------
    @property
    def is_discrete(self) -> bool:
        return self.kind in ("bernoulli", "hwe", "discrete")

    def support(self) -> tuple[float, ...]:
        if self.kind == "bernoulli":
            return (0.0, 1.0)
        if self.kind == "hwe":
            d = hwe_dist(AlleleFrequency(self.params[0]))
            return d.support
        if self.kind == "discrete":
            return self.values
        raise ModelValidationError("continuous distribution has no finite support")

    def weights(self) -> tuple[float, ...]:
        if self.kind == "bernoulli":
            p = self.params[0]
            return (1.0 - p, p)
        if self.kind == "hwe":
            d = hwe_dist(AlleleFrequency(self.params[0]))
            return d.probs
        if self.kind == "discrete":
            return self.probs
        raise ModelValidationError("continuous distribution has no finite support")

    def mean(self) -> float:
        if self.kind == "normal":
            return self.params[0]
        return sum(v * w for v, w in zip(self.support(), self.weights()))

    def variance(self) -> float:
        if self.kind == "normal":
            return self.params[1]
        m = self.mean()
        return sum(w * (v - m) ** 2 for v, w in zip(self.support(), self.weights()))

    def text(self) -> str:
        if self.kind == "discrete":
            pairs = ", ".join(f"{_fmt_num(v)}:{_fmt_num(p)}" for v, p in zip(self.values, self.probs))
            return f"discrete({pairs})"
        args = ", ".join(_fmt_num(p) for p in self.params)
        return f"{self.kind}({args})"


def normal(mean: float, variance: float) -> DistributionSpec:
    return DistributionSpec("normal", (float(mean), float(variance)))


def bernoulli(p: float) -> DistributionSpec:
    return DistributionSpec("bernoulli", (float(p),))


def hwe(p: float) -> DistributionSpec:
    return DistributionSpec("hwe", (float(p),))


def discrete(mass: dict[float, float]) -> DistributionSpec:
    items = sorted(mass.items())
    return DistributionSpec(
        "discrete",
        values=tuple(float(v) for v, _ in items),
        probs=tuple(float(p) for _, p in items),
    )


@dataclass(frozen=True)
class SymbolDef:
    name: str
    role: str
    dist: DistributionSpec | None = None
    derived: object | None = None  # expression over parental symbols


# ---------------------------------------------------------------------------
# PhenotypeModel
# ---------------------------------------------------------------------------

@dataclass
class PhenotypeModel:
    phenotype: object
    symbols: dict[str, SymbolDef]
    mode: str = MODE_POPULATION
    source: str = ""

    def __post_init__(self):
        validate_model(self)

    # --- role views ----------------------------------------------------
    def genotype_symbols(self) -> list[str]:
        return [s.name for s in self.symbols.values() if s.role == ROLE_GENOTYPE]

    def observed_symbols(self) -> list[str]:
        return [s.name for s in self.symbols.values() if s.role == ROLE_OBSERVED]

    def latent_symbols(self) -> list[str]:
        return [s.name for s in self.symbols.values() if s.role == ROLE_LATENT]

    def derived_symbols(self) -> list[str]:
        return [s.name for s in self.symbols.values() if s.role == ROLE_DERIVED]

    def parental_names(self) -> list[str]:
        out = []
        for g in self.genotype_symbols():
            out += [g + "f", g + "m"]
        return out

    @property
    def indicator(self) -> bool:
        return isinstance(self.phenotype, Ind)

    def inner_expr(self):
        return self.phenotype.arg if self.indicator else self.phenotype

    def text(self) -> str:
        """Canonical model-spec text (round-trips through parse_model)."""
        lines = [f"mode = {self.mode}"]
        for s in self.symbols.values():
            if s.role == ROLE_DERIVED:
                lines.append(f"symbol {s.name} : derived = {print_expr(s.derived)}")
            else:
                lines.append(f"symbol {s.name} : {s.role} ~ {s.dist.text()}")
        lines.append(f"phenotype = {print_expr(self.phenotype)}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.text().encode()).hexdigest()[:12]

    def __eq__(self, other):
        if not isinstance(other, PhenotypeModel):
            return NotImplemented
        return (
            self.mode == other.mode
            and self.phenotype == other.phenotype
            and self.symbols == other.symbols
        )


def _contains_ind(e) -> bool:
    if isinstance(e, (Const, Sym)):
        return False
    if isinstance(e, (Add, Sub, Mul)):
        return _contains_ind(e.left) or _contains_ind(e.right)
    if isinstance(e, Neg):
        return _contains_ind(e.arg)
    if isinstance(e, Ind):
        return True
    raise TypeError(f"not an expression node: {e!r}")


def validate_model(model: PhenotypeModel) -> None:
    if model.mode not in (MODE_POPULATION, MODE_WITHIN_FAMILY):
        raise ModelValidationError(f"unknown mode '{model.mode}'")
    # indicator only as the outermost node
    if _contains_ind(model.inner_expr()):
        raise ModelValidationError("indicator must be the outermost node of the phenotype")
    if model.indicator and _contains_ind(model.phenotype.arg):
        raise ModelValidationError("nested indicators are not allowed")

    parental = set(model.parental_names()) if model.mode == MODE_WITHIN_FAMILY else set()

    for s in model.symbols.values():
        if s.role not in ROLES:
            raise ModelValidationError(f"unknown role '{s.role}' for symbol '{s.name}'")
        if s.role == ROLE_DERIVED:
            if model.mode != MODE_WITHIN_FAMILY:
                raise ModelValidationError(
                    f"derived symbol '{s.name}' requires within_family mode"
                )
            if s.derived is None:
                raise ModelValidationError(f"derived symbol '{s.name}' has no expression")
            bad = expr_symbols(s.derived) - parental
            if bad:
                raise ModelValidationError(
                    f"derived symbol '{s.name}' may only reference parental dosages, "
                    f"got {sorted(bad)}"
                )
        else:
            if s.dist is None:
                raise ModelValidationError(f"symbol '{s.name}' has no distribution")
            if s.role == ROLE_GENOTYPE:
                if not s.dist.is_discrete:
                    raise ModelValidationError(
                        f"genotype symbol '{s.name}' must bind to a discrete law"
                    )
                if model.mode == MODE_WITHIN_FAMILY and s.dist.kind != "hwe":
                    raise ModelValidationError(
                        "within_family mode needs hwe(p) genotype bindings "
                        f"(symbol '{s.name}' binds to {s.dist.kind})"
                    )

    unbound = expr_symbols(model.phenotype) - set(model.symbols)
    if unbound:
        raise ModelValidationError(f"unbound symbols in phenotype: {sorted(unbound)}")


def classify(model: PhenotypeModel) -> str:
    """Analytic-engine eligibility.

    ``linear-gaussian``: conditional on all discrete symbols, Y is normal
    (every monomial carries at most one latent normal factor, to the first
    power).  ``probit-gaussian``: an indicator wrapped around such a form.
    Anything else is ``general-mc``.
    """
    latent_normal = {
        s.name
        for s in model.symbols.values()
        if s.role == ROLE_LATENT and s.dist is not None and s.dist.kind == "normal"
    }
    for key in monomials(model.inner_expr()):
        if sum(1 for name in key if name in latent_normal) >= 2:
            return ENGINE_MC
    return ENGINE_PROBIT if model.indicator else ENGINE_LINEAR


def evaluate(model: PhenotypeModel, assignment: dict) -> float:
    """Realize the potential outcome at a full symbol assignment.

    Derived symbols are computed from the parental dosages in the
    assignment; everything else must be present.
    """
    env = dict(assignment)
    for s in model.symbols.values():
        if s.role == ROLE_DERIVED and s.name not in env:
            env[s.name] = evaluate_expr(s.derived, env)
    return evaluate_expr(model.phenotype, env)


# ---------------------------------------------------------------------------
# Model-spec file parsing
# ---------------------------------------------------------------------------

def _parse_distribution(text: str, line: int) -> DistributionSpec:
    m = re.match(r"\s*([A-Za-z_]+)\s*\((.*)\)\s*$", text)
    if not m:
        raise ModelSyntaxError(f"malformed distribution '{text.strip()}'", line)
    kind, body = m.group(1), m.group(2)
    try:
        if kind == "discrete":
            values, probs = [], []
            for part in body.split(","):
                v, _, p = part.partition(":")
                if not _:
                    raise ModelSyntaxError("discrete needs value:prob pairs", line)
                values.append(float(v))
                probs.append(float(p))
            order = sorted(range(len(values)), key=lambda i: values[i])
            return DistributionSpec(
                "discrete",
                values=tuple(values[i] for i in order),
                probs=tuple(probs[i] for i in order),
            )
        params = tuple(float(p) for p in body.split(",")) if body.strip() else ()
        return DistributionSpec(kind, params)
    except ModelValidationError as exc:
        raise ModelSyntaxError(str(exc), line) from None
    except ValueError as exc:
        raise ModelSyntaxError(f"bad number in distribution: {exc}", line) from None


def parse_model(text: str) -> PhenotypeModel:
    """Parse a model-spec string; raises ModelSyntaxError / ModelValidationError."""
    symbols: dict[str, SymbolDef] = {}
    phenotype = None
    mode = MODE_POPULATION

    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("mode"):
            _, _, rhs = stripped.partition("=")
            mode = rhs.strip()
            if mode not in (MODE_POPULATION, MODE_WITHIN_FAMILY):
                raise ModelSyntaxError(f"unknown mode '{mode}'", lineno)
        elif stripped.startswith("symbol"):
            m = re.match(r"symbol\s+([A-Za-z_][A-Za-z0-9_]*)\s*:\s*(\w+)\s*(.*)$", stripped)
            if not m:
                raise ModelSyntaxError("malformed symbol declaration", lineno)
            name, role, rest = m.group(1), m.group(2), m.group(3)
            if name in symbols:
                raise ModelSyntaxError(f"symbol '{name}' declared twice", lineno)
            if role == ROLE_DERIVED:
                if not rest.startswith("="):
                    raise ModelSyntaxError("derived symbol needs '= <expr>'", lineno)
                symbols[name] = SymbolDef(name, role, derived=parse_expr(rest[1:], lineno))
            else:
                if role not in ROLES:
                    raise ModelSyntaxError(f"unknown role '{role}'", lineno)
                if not rest.startswith("~"):
                    raise ModelSyntaxError("symbol declaration needs '~ <distribution>'", lineno)
                symbols[name] = SymbolDef(name, role, dist=_parse_distribution(rest[1:], lineno))
        elif stripped.startswith("phenotype"):
            _, eq, rhs = stripped.partition("=")
            if not eq:
                raise ModelSyntaxError("phenotype line needs '= <expr>'", lineno)
            if phenotype is not None:
                raise ModelSyntaxError("phenotype declared twice", lineno)
            phenotype = parse_expr(rhs, lineno)
        else:
            raise ModelSyntaxError(f"unrecognized line: '{stripped}'", lineno)

    if phenotype is None:
        raise ModelSyntaxError("model has no phenotype line")
    return PhenotypeModel(phenotype=phenotype, symbols=symbols, mode=mode, source=text)


def load_model(path) -> PhenotypeModel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model(fh.read())
