"""
Plain-text s-expression reader/writer used for identity suites.

Grammar (see docs/formats.md):

    node    := atom | "(" node* ")"
    atom    := number | symbol | string
    number  := integer | integer "/" integer | decimal   (read exactly as Fraction)
    symbol  := any run of characters other than whitespace, parens, quote, ';'
    string  := '"' characters '"'
    comment := ';' to end of line

Lists come back as tuples, numbers as Fraction, symbols as str and strings as Quoted.
"""

from fractions import Fraction
from typing import Iterator, List, Tuple, Union


class Quoted(str):
    """String literal (as opposed to a symbol)"""
    pass


Node = Union[Fraction, str, Quoted, Tuple["Node", ...]]


class SexprSyntaxError(ValueError):
    """Raised on unbalanced parentheses or unterminated strings"""
    pass


def _tokenize(text: str) -> Iterator[Tuple[str, str]]:
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in "()":
            yield ch, ch
            i += 1
        elif ch == '"':
            j = text.find('"', i + 1)
            if j < 0:
                raise SexprSyntaxError(f"Unterminated string starting at offset {i}")
            yield "str", text[i + 1:j]
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in '();"':
                j += 1
            yield "atom", text[i:j]
            i = j


def _atom(token: str) -> Union[Fraction, str]:
    try:
        return Fraction(token)
    except ValueError:
        return token


def parse_all(text: str) -> List[Node]:
    """Parse every top-level node in text"""
    stack: List[list] = [[]]
    for kind, token in _tokenize(text):
        if kind == "(":
            stack.append([])
        elif kind == ")":
            if len(stack) == 1:
                raise SexprSyntaxError("Unexpected ')'")
            done = tuple(stack.pop())
            stack[-1].append(done)
        elif kind == "str":
            stack[-1].append(Quoted(token))
        else:
            stack[-1].append(_atom(token))
    if len(stack) != 1:
        raise SexprSyntaxError(f"{len(stack) - 1} unclosed '('")
    return stack[0]


def parse(text: str) -> Node:
    """Parse exactly one node"""
    nodes = parse_all(text)
    if len(nodes) != 1:
        raise SexprSyntaxError(f"Expected one expression, found {len(nodes)}")
    return nodes[0]


def dumps(node: Node) -> str:
    if isinstance(node, tuple):
        return "(" + " ".join(dumps(child) for child in node) + ")"
    if isinstance(node, Quoted):
        return f'"{node}"'
    if isinstance(node, Fraction):
        return str(node)
    return str(node)
