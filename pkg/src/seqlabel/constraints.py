"""Propositional constraints in CNF over the output variables.

Clauses are stored as tuples of signed DIMACS literals (positive integer k
for variable k, negative for its negation; variables are 1-based). Variable k
refers to the k-th output position of the model the constraint set is paired
with, after any label reordering.
"""

from dataclasses import dataclass

from .errors import ParseError, ShapeError


@dataclass(frozen=True)
class Literal:
    """One signed variable occurrence; the API edge for clause construction."""

    var_index: int
    positive: bool

    def __post_init__(self):
        if self.var_index < 1:
            raise ValueError("variable indices are 1-based")

    @classmethod
    def from_int(cls, lit: int) -> "Literal":
        if lit == 0:
            raise ValueError("0 is the DIMACS clause terminator, not a literal")
        return cls(abs(lit), lit > 0)

    def to_int(self) -> int:
        return self.var_index if self.positive else -self.var_index


@dataclass(frozen=True)
class ConstraintSet:
    """A CNF formula over `n_vars` output variables."""

    n_vars: int
    clauses: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.n_vars < 1:
            raise ValueError("n_vars must be positive")
        normalized = []
        for clause in self.clauses:
            if not clause:
                raise ValueError("empty clause")
            seen = []
            for lit in clause:
                lit = int(lit)
                if lit == 0 or abs(lit) > self.n_vars:
                    raise ValueError(f"literal {lit} out of range for {self.n_vars} variables")
                if lit not in seen:
                    seen.append(lit)
            normalized.append(tuple(seen))
        object.__setattr__(self, "clauses", tuple(normalized))

    @classmethod
    def from_literals(cls, n_vars: int, clauses) -> "ConstraintSet":
        return cls(n_vars, tuple(tuple(lit.to_int() for lit in cl) for cl in clauses))


def parse_dimacs(text: str) -> ConstraintSet:
    """Parse DIMACS CNF. Raises ParseError with a 1-based line number."""
    n_vars = None
    n_clauses = None
    clauses: list[tuple[int, ...]] = []
    current: list[int] = []
    header_line = 0

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("p"):
            if n_vars is not None:
                raise ParseError("duplicate problem header", lineno)
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise ParseError(f"malformed header {line!r}, expected 'p cnf <vars> <clauses>'", lineno)
            try:
                n_vars = int(parts[2])
                n_clauses = int(parts[3])
            except ValueError:
                raise ParseError(f"non-integer counts in header {line!r}", lineno) from None
            if n_vars < 1:
                raise ParseError("header must declare at least one variable", lineno)
            if n_clauses < 0:
                raise ParseError("negative clause count in header", lineno)
            header_line = lineno
            continue
        if n_vars is None:
            raise ParseError(f"clause data before 'p cnf' header: {line!r}", lineno)
        for token in line.split():
            try:
                lit = int(token)
            except ValueError:
                raise ParseError(f"expected an integer literal, got {token!r}", lineno) from None
            if lit == 0:
                if not current:
                    raise ParseError("empty clause", lineno)
                clauses.append(tuple(current))
                current = []
            else:
                if abs(lit) > n_vars:
                    raise ParseError(f"literal {lit} out of range (header declares {n_vars} variables)", lineno)
                current.append(lit)

    if n_vars is None:
        raise ParseError("missing 'p cnf' header", 1)
    if current:
        raise ParseError("unterminated clause at end of input (missing trailing 0)", lineno)
    if len(clauses) != n_clauses:
        raise ParseError(
            f"header declares {n_clauses} clauses but {len(clauses)} were given", header_line
        )
    return ConstraintSet(n_vars, tuple(clauses))


def serialize_dimacs(cs: ConstraintSet) -> str:
    lines = [f"p cnf {cs.n_vars} {len(cs.clauses)}"]
    for clause in cs.clauses:
        lines.append(" ".join(str(lit) for lit in clause) + " 0")
    return "\n".join(lines) + "\n"


def eval_full(cs: ConstraintSet, valuation) -> bool:
    """Whether a complete assignment satisfies every clause."""
    if len(valuation) != cs.n_vars:
        raise ShapeError(f"valuation has {len(valuation)} entries, constraint has {cs.n_vars} variables")
    for clause in cs.clauses:
        for lit in clause:
            if bool(valuation[abs(lit) - 1]) == (lit > 0):
                break
        else:
            return False
    return True


def _assign(clauses, lit):
    """Clauses remaining after forcing `lit` true, or None on a conflict."""
    out = []
    for clause in clauses:
        if lit in clause:
            continue
        if -lit in clause:
            reduced = tuple(x for x in clause if x != -lit)
            if not reduced:
                return None
            out.append(reduced)
        else:
            out.append(clause)
    return out


def _dpll(clauses) -> bool:
    """Plain DPLL: unit propagation plus branching on the lowest live variable."""
    while True:
        if not clauses:
            return True
        unit = None
        for clause in clauses:
            if len(clause) == 1:
                unit = clause[0]
                break
        if unit is None:
            break
        clauses = _assign(clauses, unit)
        if clauses is None:
            return False
    var = min(abs(lit) for clause in clauses for lit in clause)
    for lit in (var, -var):
        reduced = _assign(clauses, lit)
        if reduced is not None and _dpll(reduced):
            return True
    return False


def sat_with_prefix(cs: ConstraintSet, prefix) -> bool:
    """Whether some completion of the assignment v1..vj satisfies the formula."""
    if len(prefix) > cs.n_vars:
        raise ShapeError(f"prefix of length {len(prefix)} exceeds {cs.n_vars} variables")
    clauses = list(cs.clauses)
    for i, value in enumerate(prefix):
        clauses = _assign(clauses, (i + 1) if bool(value) else -(i + 1))
        if clauses is None:
            return False
    return _dpll(clauses)


def split_valid_invalid(cs: ConstraintSet, valuations):
    """Partition valuations into (satisfying, violating), preserving order."""
    valid, invalid = [], []
    for v in valuations:
        (valid if eval_full(cs, v) else invalid).append(v)
    return valid, invalid
