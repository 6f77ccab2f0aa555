"""Regex-plus-scanner extraction of Verilog module structure.

Scans run over comment- and string-masked text, so declarations inside
``//`` or ``/* */`` never match. Offsets always refer to the original
source, which is never normalized.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Optional

from .errors import NoModuleFound, UnparseablePortList, UnterminatedModule
from .lexical import mask
from .model import PortSpec, Unresolved, Width

IDENT = r"[A-Za-z_][A-Za-z0-9_$]*"
MODULE_RE = re.compile(r"(?<![\w$`])(?:macro)?module\s+(" + IDENT + r")")
ENDMODULE_RE = re.compile(r"(?<![\w$`])endmodule(?![\w$])")
PARAMETER_RE = re.compile(r"(?<![\w$`])(parameter|localparam)\b([^;]*);")
PORT_DECL_RE = re.compile(r"(?<![\w$`])(input|output|inout)\b([^;]*);")
SUBROUTINE_RE = re.compile(
    r"(?<![\w$`])(function|task)\b.*?(?<![\w$`])end(?:function|task)\b", re.DOTALL
)

DIRECTIONS = ("input", "output", "inout")
NET_MODIFIERS = {
    "wire", "reg", "logic", "signed", "unsigned", "tri", "tri0", "tri1", "triand",
    "trior", "wand", "wor", "supply0", "supply1", "uwire", "var", "integer", "time",
}
FIXED_TYPE_WIDTHS = {"integer": 32, "time": 64}
PARAM_TYPE_WORDS = {"integer", "real", "realtime", "time", "signed", "unsigned"}

ParamEnv = dict  # parameter name -> int


@dataclass(frozen=True)
class ModuleSpan:
    name: str
    start: int
    header_end: int  # just past the ';' ending the module header
    end: int  # just past 'endmodule'

    @property
    def header(self) -> tuple[int, int]:
        return (self.start, self.header_end)

    @property
    def body(self) -> tuple[int, int]:
        return (self.header_end, self.end)


# ---------------------------------------------------------------- bracket helpers

_OPEN = {"(": ")", "[": "]", "{": "}"}
_CLOSE = {")", "]", "}"}


def _matching(text: str, pos: int) -> int:
    """Index just past the bracket closing the one at ``pos``, or -1."""
    depth = 0
    for i in range(pos, len(text)):
        c = text[i]
        if c in _OPEN:
            depth += 1
        elif c in _CLOSE:
            depth -= 1
            if depth == 0:
                return i + 1
    return -1


def split_top_level(text: str, sep: str = ",") -> list[str]:
    parts, depth, last = [], 0, 0
    for i, c in enumerate(text):
        if c in _OPEN:
            depth += 1
        elif c in _CLOSE:
            depth -= 1
        elif c == sep and depth == 0:
            parts.append(text[last:i])
            last = i + 1
    parts.append(text[last:])
    return parts


def _header_terminator(masked: str, pos: int) -> int:
    depth = 0
    for i in range(pos, len(masked)):
        c = masked[i]
        if c in _OPEN:
            depth += 1
        elif c in _CLOSE:
            depth -= 1
        elif c == ";" and depth == 0:
            return i + 1
    return -1


# ---------------------------------------------------------------- module discovery

def find_modules(source: str) -> list[ModuleSpan]:
    """Every live ``module ... endmodule`` region, in source order."""
    masked = mask(source)
    spans: list[ModuleSpan] = []
    pos = 0
    while True:
        m = MODULE_RE.search(masked, pos)
        if not m:
            break
        name = m.group(1)
        end_m = ENDMODULE_RE.search(masked, m.end())
        nxt = MODULE_RE.search(masked, m.end())
        if end_m is None or (nxt is not None and nxt.start() < end_m.start()):
            raise UnterminatedModule(name)
        header_end = _header_terminator(masked, m.end())
        if header_end < 0 or header_end > end_m.start():
            raise UnterminatedModule(name)
        spans.append(ModuleSpan(name, m.start(), header_end, end_m.end()))
        pos = end_m.end()
    if not spans:
        raise NoModuleFound("no module declaration found")
    return spans


def module_names(source: str) -> list[str]:
    """Declared module names; tolerant variant of find_modules for filtering."""
    return MODULE_RE.findall(mask(source))


# ---------------------------------------------------------------- constant expressions

_EXPR_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<based>(?:\d[\d_]*)?\s*'[sS]?(?:[bB][01_]+|[oO][0-7_]+|[dD][\d_]+|[hH][0-9a-fA-F_]+))"
    r"|(?P<num>\d[\d_]*)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_$]*)"
    r"|(?P<op>[-+*()])"
    r")"
)
_BASES = {"b": 2, "o": 8, "d": 10, "h": 16}


def _based_value(lit: str) -> int:
    _, _, rest = lit.partition("'")
    rest = rest.lstrip("sS")
    return int(rest[1:].replace("_", ""), _BASES[rest[0].lower()])


def _tokenize_expr(text: str) -> Optional[list[tuple[str, str]]]:
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _EXPR_TOKEN.match(text, pos)
        if not m or m.end() == pos:
            return None
        kind = m.lastgroup
        tokens.append((kind, m.group(kind)))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return tokens


class _Unbound(Exception):
    pass


def eval_const(text: str, env: ParamEnv) -> Optional[int]:
    """Evaluate an integer expression over + - * and parentheses.

    Returns None for anything else: unbound names, macros, function calls,
    other operators.
    """
    tokens = _tokenize_expr(text)
    if not tokens:
        return None
    pos = 0

    def peek() -> Optional[tuple[str, str]]:
        return tokens[pos] if pos < len(tokens) else None

    def take() -> tuple[str, str]:
        nonlocal pos
        if pos >= len(tokens):
            raise _Unbound
        tok = tokens[pos]
        pos += 1
        return tok

    def expr() -> int:
        value = term()
        while peek() in (("op", "+"), ("op", "-")):
            op = take()[1]
            rhs = term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def term() -> int:
        value = unary()
        while peek() == ("op", "*"):
            take()
            value *= unary()
        return value

    def unary() -> int:
        tok = peek()
        if tok in (("op", "+"), ("op", "-")):
            take()
            v = unary()
            return -v if tok[1] == "-" else v
        return primary()

    def primary() -> int:
        kind, value = take()
        if kind == "num":
            return int(value.replace("_", ""))
        if kind == "based":
            return _based_value(value)
        if kind == "ident":
            if value not in env:
                raise _Unbound
            return env[value]
        if value == "(":
            v = expr()
            if take() != ("op", ")"):
                raise _Unbound
            return v
        raise _Unbound

    try:
        result = expr()
    except (_Unbound, ValueError):
        return None
    if pos != len(tokens):
        return None
    return result


def resolve_width(range_expr: str, env: Optional[ParamEnv] = None) -> Width:
    """Width of a ``[H:L]`` range: ``|H - L| + 1``, or Unresolved."""
    env = env or {}
    text = range_expr.strip()
    inner = text[1:-1] if text.startswith("[") and text.endswith("]") else text
    bounds = split_top_level(inner, ":")
    if len(bounds) != 2:
        return Unresolved(text)
    hi, lo = (eval_const(b, env) for b in bounds)
    if hi is None or lo is None:
        return Unresolved(text)
    return abs(hi - lo) + 1


# ---------------------------------------------------------------- parameters

def _param_assignments(text: str) -> Iterator[tuple[str, str]]:
    for item in split_top_level(text):
        item = item.strip()
        if "=" not in item:
            continue
        lhs, _, rhs = item.partition("=")
        words = lhs.split()
        # drop keywords, types and packed ranges ahead of the name
        while words and (words[0] in ("parameter", "localparam") or words[0] in PARAM_TYPE_WORDS):
            words.pop(0)
        lhs = re.sub(r"\[[^\]]*\]", " ", " ".join(words)).split()
        if len(lhs) != 1 or not re.fullmatch(IDENT, lhs[0]):
            continue
        yield lhs[0], rhs.strip()


def collect_params(header_params: str, body: str, env: Optional[ParamEnv] = None) -> ParamEnv:
    """Bind parameters from a ``#( ... )`` list and body declarations, in order."""
    env = dict(env or {})
    sources = [header_params] + [m.group(0)[:-1] for m in PARAMETER_RE.finditer(body)]
    for src in sources:
        for name, expr in _param_assignments(src):
            value = eval_const(expr, env)
            if value is not None:
                env[name] = value
    return env


# ---------------------------------------------------------------- ports

_DECL_ITEM = re.compile(
    r"\s*(?:(?P<dir>input|output|inout)\b)?"
    r"(?P<mods>(?:\s*(?:" + "|".join(sorted(NET_MODIFIERS)) + r")\b)*)"
    r"(?P<ranges>(?:\s*\[[^\]]*\])*)"
    r"\s*(?P<name>" + IDENT + r")"
    r"(?P<dims>(?:\s*\[[^\]]*\])*)"
    r"\s*(?:=.*)?\s*",
    re.DOTALL,
)
_RANGE = re.compile(r"\[[^\]]*\]")


def _packed_width(ranges: str, mods: str, env: ParamEnv) -> Width:
    found = _RANGE.findall(ranges)
    if not found:
        for word in mods.split():
            if word in FIXED_TYPE_WIDTHS:
                return FIXED_TYPE_WIDTHS[word]
        return 1
    width = 1
    for r in found:
        w = resolve_width(r, env)
        if isinstance(w, Unresolved):
            return Unresolved("".join(x.strip() for x in found))
        width *= w
    return width


@dataclass
class _Header:
    params: str
    ports: Optional[str]  # None when the module has no port list


def _split_header(masked_header: str, name_end: int) -> _Header:
    text = masked_header
    pos = name_end
    params = ""

    def skip(p: int) -> int:
        while p < len(text) and text[p].isspace():
            p += 1
        return p

    pos = skip(pos)
    if pos < len(text) and text[pos] == "#":
        pos = skip(pos + 1)
        if pos >= len(text) or text[pos] != "(":
            raise UnparseablePortList("malformed parameter list")
        close = _matching(text, pos)
        if close < 0:
            raise UnparseablePortList("unbalanced parameter list")
        params = text[pos + 1:close - 1]
        pos = skip(close)
    if pos < len(text) and text[pos] == "(":
        close = _matching(text, pos)
        if close < 0:
            raise UnparseablePortList("unbalanced port list")
        ports = text[pos + 1:close - 1]
        rest = text[close:].strip()
        if rest != ";":
            raise UnparseablePortList(f"unexpected text after port list: {rest[:30]!r}")
        return _Header(params, ports)
    if text[pos:].strip() != ";":
        raise UnparseablePortList("expected port list")
    return _Header(params, None)


def _parse_ansi(items: list[str], env: ParamEnv) -> list[PortSpec]:
    ports: list[PortSpec] = []
    direction: Optional[str] = None
    width: Width = 1
    for raw in items:
        m = _DECL_ITEM.fullmatch(raw)
        if not m:
            raise UnparseablePortList(f"cannot parse port {raw.strip()!r}")
        if m.group("dir"):
            direction = m.group("dir")
            width = _packed_width(m.group("ranges"), m.group("mods"), env)
        elif direction is None:
            raise UnparseablePortList(f"port {m.group('name')!r} has no direction")
        elif m.group("ranges").strip() or m.group("mods").strip():
            width = _packed_width(m.group("ranges"), m.group("mods"), env)
        ports.append(PortSpec(m.group("name"), direction, width))
    return ports


def _body_directions(masked_body: str, env: ParamEnv) -> dict[str, PortSpec]:
    body = SUBROUTINE_RE.sub(lambda m: " " * len(m.group(0)), masked_body)
    found: dict[str, PortSpec] = {}
    for decl in PORT_DECL_RE.finditer(body):
        items = split_top_level(decl.group(0)[:-1])
        for port in _parse_ansi(items, env):
            found.setdefault(port.name, port)
    return found


def parse_ports(module_text: str, env: Optional[ParamEnv] = None) -> list[PortSpec]:
    """Ports of a single module region (header plus body), in header order.

    Handles ANSI headers and non-ANSI bodies; comma groups expand to one
    port each and inherit the group's direction and range.
    """
    masked = mask(module_text)
    m = MODULE_RE.search(masked)
    if not m:
        raise UnparseablePortList("not a module region")
    header_end = _header_terminator(masked, m.end())
    if header_end < 0:
        raise UnparseablePortList("unterminated module header")
    header = _split_header(masked[:header_end], m.end())
    end_m = ENDMODULE_RE.search(masked, header_end)
    body = masked[header_end:end_m.start() if end_m else len(masked)]
    env = collect_params(header.params, body, env)

    if header.ports is None or not header.ports.strip():
        return []
    items = split_top_level(header.ports)
    if any(not item.strip() for item in items):
        raise UnparseablePortList("empty entry in port list")
    first = items[0].split()
    if first and first[0] in DIRECTIONS:
        return _parse_ansi(items, env)

    declared = _body_directions(body, env)
    ports = []
    for item in items:
        name = item.strip()
        if not re.fullmatch(IDENT, name):
            raise UnparseablePortList(f"unsupported port expression {name!r}")
        if name not in declared:
            raise UnparseablePortList(f"no direction declared for port {name!r}")
        ports.append(declared[name])
    return ports


def module_params(module_text: str) -> ParamEnv:
    masked = mask(module_text)
    m = MODULE_RE.search(masked)
    if not m:
        return {}
    header_end = _header_terminator(masked, m.end())
    try:
        header = _split_header(masked[:header_end], m.end())
    except UnparseablePortList:
        return {}
    return collect_params(header.params, masked[header_end:])


def find_instantiations(module_text: str, candidates: set[str]) -> set[str]:
    """Names from ``candidates`` instantiated inside a module region."""
    masked = mask(module_text)
    m = MODULE_RE.search(masked)
    start = _header_terminator(masked, m.end()) if m else 0
    body = masked[max(start, 0):]
    hits = set()
    for inst in re.finditer(
        r"(?<![\w$`.])(" + IDENT + r")\s*(?:#\s*\(|(" + IDENT + r")\s*[\(\[])", body
    ):
        if inst.group(1) in candidates:
            hits.add(inst.group(1))
    return hits
