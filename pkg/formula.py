"""
Mixed-model formula mini-language.

    formula   := ident "~" (term_expr | "1") ("+" item)*
    item      := term_expr | "1" | "(" block ")"
    block     := ["1" | "0"] ["+"] term_expr ("+" term_expr)* "|" ident
    term_expr := inter ("*" inter)*
    inter     := ident (":" ident)*

``:`` binds tighter than ``*``; ``a*b`` expands to ``a + b + a:b`` (mains first, then
interactions by increasing order). A random block carries an intercept unless it
starts with ``0``.
"""
import itertools
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable

from errors import FormulaError, SchemaError

_log = logging.getLogger(__name__)

_TOKEN = re.compile(r'(?P<ident>[A-Za-z_][A-Za-z0-9_.]*)|(?P<number>\d+)|(?P<op>[~+*:()|])')


@dataclass(frozen=True, eq=False)
class Term:
    """A main effect (one variable) or an interaction; equality ignores variable order."""
    variables: tuple[str, ...]

    def __post_init__(self):
        if not self.variables:
            raise ValueError('A term needs at least one variable')

    @property
    def key(self) -> frozenset[str]:
        return frozenset(self.variables)

    @property
    def order(self) -> int:
        return len(self.key)

    @property
    def label(self) -> str:
        return ':'.join(self.variables)

    def __eq__(self, other):
        return isinstance(other, Term) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __str__(self):
        return self.label

    def __repr__(self):
        return f'Term({self.label})'


@dataclass(frozen=True)
class RandomBlock:
    group: str
    has_intercept: bool = True
    slope_terms: tuple[Term, ...] = ()

    @property
    def variables(self) -> list[str]:
        return _unique(v for term in self.slope_terms for v in term.variables)

    def pretty(self) -> str:
        head = '1' if self.has_intercept else '0'
        slopes = ''.join(f' + {term.label}' for term in self.slope_terms)
        return f'({head}{slopes} | {self.group})'


@dataclass(frozen=True)
class ModelSpec:
    response: str
    fixed_terms: tuple[Term, ...] = ()
    random_blocks: tuple[RandomBlock, ...] = ()
    intercept: bool = field(default=True)

    @property
    def fixed_variables(self) -> list[str]:
        return _unique(v for term in self.fixed_terms for v in term.variables)

    @property
    def variables(self) -> list[str]:
        """Predictor columns (fixed first, then random slopes), without grouping factors."""
        return _unique(itertools.chain(self.fixed_variables,
                                       (v for block in self.random_blocks for v in block.variables)))

    @property
    def grouping_factors(self) -> list[str]:
        return [block.group for block in self.random_blocks]

    @property
    def columns(self) -> list[str]:
        """Every column the model touches, response first."""
        return _unique([self.response, *self.variables, *self.grouping_factors])

    def pretty(self) -> str:
        items = [term.label for term in self.fixed_terms] or ['1']
        items += [block.pretty() for block in self.random_blocks]
        return f'{self.response} ~ {" + ".join(items)}'

    def __str__(self):
        return self.pretty()


def _unique(values: Iterable[str]) -> list[str]:
    return list(dict.fromkeys(values))


@dataclass(frozen=True)
class _Token:
    kind: str
    value: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        match = _TOKEN.match(text, pos)
        offset = len(text[:pos].encode('utf-8'))
        if match is None:
            raise FormulaError(f'unexpected character {text[pos]!r}', offset)
        kind = match.lastgroup
        tokens.append(_Token(kind, match.group(kind), offset))
        pos = match.end()
    tokens.append(_Token('end', '', len(text.encode('utf-8'))))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.index = 0

    @property
    def current(self) -> _Token:
        return self.tokens[self.index]

    def at(self, value: str) -> bool:
        return self.current.kind == 'op' and self.current.value == value

    def take(self) -> _Token:
        token = self.current
        self.index += 1
        return token

    def expect_op(self, value: str) -> _Token:
        if not self.at(value):
            raise FormulaError(f"expected '{value}', found {self._describe(self.current)}", self.current.offset)
        return self.take()

    def expect_ident(self) -> _Token:
        if self.current.kind != 'ident':
            raise FormulaError(f'expected a column name, found {self._describe(self.current)}', self.current.offset)
        return self.take()

    @staticmethod
    def _describe(token: _Token) -> str:
        return 'end of formula' if token.kind == 'end' else repr(token.value)

    def parse(self) -> ModelSpec:
        response = self.expect_ident()
        self.expect_op('~')

        fixed: list[Term] = []
        blocks: list[RandomBlock] = []
        if self.at('('):
            raise FormulaError("the right-hand side must start with a fixed term or '1'", self.current.offset)
        while True:
            start = self.current
            if self.at('('):
                block = self.block()
                if any(b.group == block.group for b in blocks):
                    raise FormulaError(f"grouping factor '{block.group}' appears in two random blocks", start.offset)
                blocks.append(block)
            elif self.current.kind == 'number':
                token = self.take()
                if token.value != '1':
                    raise FormulaError('the fixed intercept is always present and cannot be removed', token.offset)
            else:
                for term in self.term_expr():
                    if term in fixed:
                        raise FormulaError(f"duplicate term '{term.label}'", start.offset)
                    fixed.append(term)
            if not self.at('+'):
                break
            self.take()

        if self.current.kind != 'end':
            raise FormulaError(f'unexpected {self._describe(self.current)}', self.current.offset)

        spec = ModelSpec(response.value, tuple(fixed), tuple(blocks))
        on_rhs = [*spec.variables, *spec.grouping_factors]
        if spec.response in on_rhs:
            raise FormulaError(f"response '{spec.response}' appears on the right-hand side", response.offset)
        return spec

    def interaction(self) -> tuple[str, ...]:
        names = [self.expect_ident().value]
        while self.at(':'):
            self.take()
            names.append(self.expect_ident().value)
        return tuple(names)

    def term_expr(self) -> list[Term]:
        groups = [self.interaction()]
        while self.at('*'):
            self.take()
            groups.append(self.interaction())
        terms = []
        for size in range(1, len(groups) + 1):
            for subset in itertools.combinations(groups, size):
                terms.append(Term(tuple(v for group in subset for v in group)))
        return _unique_terms(terms)

    def block(self) -> RandomBlock:
        opening = self.expect_op('(')
        has_intercept = True
        slopes: list[Term] = []

        expect_terms = True
        if self.current.kind == 'number':
            token = self.take()
            if token.value not in ('0', '1'):
                raise FormulaError(f"expected '0' or '1', found {token.value!r}", token.offset)
            has_intercept = token.value == '1'
            if self.at('+'):
                self.take()
            else:
                expect_terms = False

        if expect_terms:
            while True:
                start = self.current
                for term in self.term_expr():
                    if term in slopes:
                        raise FormulaError(f"duplicate slope term '{term.label}'", start.offset)
                    slopes.append(term)
                if not self.at('+'):
                    break
                self.take()

        self.expect_op('|')
        group = self.expect_ident().value
        self.expect_op(')')

        if not has_intercept and not slopes:
            raise FormulaError(f"random block for '{group}' is empty", opening.offset)
        return RandomBlock(group, has_intercept, tuple(slopes))


def _unique_terms(terms: list[Term]) -> list[Term]:
    seen: list[Term] = []
    for term in terms:
        if term not in seen:
            seen.append(term)
    return seen


def parse_formula(text: str) -> ModelSpec:
    if not text or not text.strip():
        raise FormulaError('formula is empty', 0)
    spec = _Parser(text).parse()
    _log.debug(f'Parsed formula: {spec.pretty()}')
    return spec


def validate_spec(spec: ModelSpec, schema) -> None:
    """
    Check ``spec`` against a ``data.schema.ColumnSchema``.

    Raises:
        SchemaError: unknown column, response not binary, incompatible column kind, or a
            variable interacting with itself.
    """
    from data.schema import ColumnKind

    def column(name: str):
        if name not in schema:
            raise SchemaError(f"unknown column '{name}'", module='formula')
        return schema[name]

    response = column(spec.response)
    if response.kind is not ColumnKind.RESPONSE:
        raise SchemaError(f"column '{spec.response}' is declared '{response.kind.value}', not 'response'",
                          module='formula')
    if response.levels is not None and len(response.levels) != 2:
        raise SchemaError(f"response '{spec.response}' is not binary: {len(response.levels)} levels declared",
                          module='formula')

    terms = [*spec.fixed_terms, *(t for block in spec.random_blocks for t in block.slope_terms)]
    for term in terms:
        for name in term.variables:
            if column(name).kind is ColumnKind.RESPONSE:
                raise SchemaError(f"response column '{name}' used as a predictor in '{term.label}'", module='formula')
        repeated = [v for v in term.key if term.variables.count(v) > 1]
        for name in repeated:
            kind = schema[name].kind
            what = 'ordered factor' if kind is ColumnKind.ORDERED else kind.value
            raise SchemaError(f"{what} '{name}' interacts with itself in '{term.label}'", module='formula')

    for group in spec.grouping_factors:
        if column(group).kind is not ColumnKind.FACTOR:
            raise SchemaError(f"grouping column '{group}' must be an unordered factor", module='formula')


# Reconstructions of the two published designs; see DESIGN.md for the derivation.
DATASET1_FORMULA = (
    'accuracy ~ task_order*trial_type*condition + trial + task_order:trial + trial:condition'
    ' + task_order:trial:condition + gender + initial_sound + syllables + log_frequency'
    ' + (1 + condition*trial_type | participant)'
    ' + (1 + condition*task_order*trial_type | item)'
)

DATASET2_FORMULA = (
    'marked ~ stress + function_word + left_marked + right_marked + prev_syllable_marked + instructions'
    ' + f0*intensity*duration'
    ' + (1 + stress + function_word + f0 + intensity + f0:intensity | subject)'
    ' + (1 + instructions + prev_syllable_marked | item)'
)
