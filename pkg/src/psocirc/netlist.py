"""Netlist parsing and circuit construction.

The netlist format is line oriented, UTF-8, with '#' comments:

    node <name>
    branch <n1> <n2> [L=<val>] [C=<val>] [R=<val>]
    port <name> <n1> <n2>
    tline <prefix> <n1> <n2> len=<val> z0=<val> v=<val> delta=<val>
          [short=left|right|both|none]
    tap <tline-prefix> <name> at=<val> [mirror=<name2>]
    semi_infinite <n1> <n2> z0=<val> [port=<name>]
    transmon <name> <n1> <n2> Lj=<val> Cj=<val>
    region <name> = <tline-prefix>|<node-list>
    sweep <param-path> from=<val> to=<val> points=<int> [log]

Values take SI-prefix suffixes (f/p/n/u/m/k/M/G) on the base units F, H,
m, s, Hz and "ohm"; bare numbers are SI.  A tap with mirror=<name2> also
names the position len-at, measured from the other end of the line.  The
node "gnd" always exists and is the ground reference.

Transmission lines expand to symmetric LC ladders: N = round(len/delta)
cells of series inductance L'*h with shunt capacitance C'*h to ground,
where the half cells at the two ends carry half the shunt capacitance.
Transmons expand to parallel Lj || Cj branches.
"""

from __future__ import annotations

import hashlib
import importlib.resources
import math
import re
from dataclasses import dataclass, field, replace

from .graph import GROUND, CircuitGraph, assemble_pso, build_tree_maps, terminate_semi_infinite
from .model import PsoError


class NetlistError(PsoError):
    """Base for netlist problems; carries a (line, column) location."""

    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        loc = f" (line {line}, col {col})" if line is not None else ""
        super().__init__(message + loc)


class NetlistSyntaxError(NetlistError):
    pass


class UnknownUnitError(NetlistError):
    pass


class DuplicateNameError(NetlistError):
    pass


class MissingParameterError(NetlistError):
    pass


class DegenerateDiscretizationError(PsoError):
    """Discretization length exceeds the line length (zero cells)."""


class UnresolvedTapError(PsoError):
    """Tap position lies beyond the transmission line."""


_PREFIXES = {
    "f": 1e-15, "p": 1e-12, "n": 1e-9, "u": 1e-6, "µ": 1e-6,
    "m": 1e-3, "k": 1e3, "M": 1e6, "G": 1e9,
}
_BASE_UNITS = ("ohm", "Hz", "F", "H", "S", "m", "s")
_NUM_RE = re.compile(r"^[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")


def parse_value(token: str, line=None, col=None) -> float:
    """Parse a number with an optional SI-prefixed unit suffix."""
    m = _NUM_RE.match(token)
    if not m:
        raise NetlistSyntaxError(f"expected a numeric value, got {token!r}", line, col)
    value = float(m.group(0))
    suffix = token[m.end():]
    if not suffix:
        return value
    for base in _BASE_UNITS:
        if suffix.endswith(base):
            prefix = suffix[: -len(base)]
            if prefix == "":
                return value
            if prefix in _PREFIXES:
                return value * _PREFIXES[prefix]
    raise UnknownUnitError(f"unknown unit suffix {suffix!r} in {token!r}", line, col)


@dataclass(frozen=True)
class BranchStmt:
    n1: str
    n2: str
    l: float | None = None
    c: float | None = None
    r: float | None = None
    kind: str = "branch"


@dataclass(frozen=True)
class PortStmt:
    name: str
    n1: str
    n2: str
    kind: str = "port"


@dataclass(frozen=True)
class TlineStmt:
    prefix: str
    n1: str
    n2: str
    length: float
    z0: float
    v: float
    delta: float
    short: str = "none"
    kind: str = "tline"


@dataclass(frozen=True)
class TapStmt:
    tline: str
    name: str
    at: float
    mirror: str | None = None
    kind: str = "tap"


@dataclass(frozen=True)
class SemiInfiniteStmt:
    n1: str
    n2: str
    z0: float
    port: str | None = None
    kind: str = "semi_infinite"


@dataclass(frozen=True)
class TransmonStmt:
    name: str
    n1: str
    n2: str
    lj: float
    cj: float
    kind: str = "transmon"


@dataclass(frozen=True)
class RegionStmt:
    name: str
    targets: tuple[str, ...]
    kind: str = "region"


@dataclass(frozen=True)
class SweepStmt:
    path: str
    start: float
    stop: float
    points: int
    log: bool = False
    kind: str = "sweep"


@dataclass(frozen=True)
class NodeStmt:
    name: str
    kind: str = "node"


@dataclass(frozen=True)
class Netlist:
    statements: tuple = ()

    def sweeps(self) -> list[SweepStmt]:
        return [s for s in self.statements if s.kind == "sweep"]

    def content_hash(self) -> str:
        return hashlib.sha256(serialize_netlist(self).encode()).hexdigest()

    def named_statements(self) -> dict:
        out = {}
        for s in self.statements:
            key = getattr(s, "name", None) or getattr(s, "prefix", None)
            if key is not None and s.kind in ("tline", "tap", "transmon", "port"):
                out[key] = s
        return out

    def resolve_param(self, path: str):
        """Resolve a parameter path to (statement, field name).

        Accepts "<name>.<field>" or a bare "<name>" which maps to the
        statement's primary numeric field (tap: at, transmon: lj,
        tline: length).  A bare token that names no statement resolves
        against field names instead, if exactly one statement has it.
        """
        primary = {"tap": "at", "transmon": "lj", "tline": "length"}
        field_alias = {"len": "length", "Lj": "lj", "Cj": "cj", "L": "l", "C": "c", "R": "r"}
        named = self.named_statements()
        if "." in path:
            name, fld = path.split(".", 1)
            fld = field_alias.get(fld, fld)
            stmt = named.get(name)
            if stmt is None:
                raise KeyError(f"no statement named {name!r}")
            if not hasattr(stmt, fld):
                raise KeyError(f"statement {name!r} has no field {fld!r}")
            return stmt, fld
        if path in named:
            stmt = named[path]
            fld = primary.get(stmt.kind)
            if fld is None:
                raise KeyError(f"statement {path!r} needs an explicit field, e.g. {path}.z0")
            return stmt, fld
        fld = field_alias.get(path, path)
        matches = [s for s in self.statements if hasattr(s, fld) and s.kind != "sweep"]
        if len(matches) == 1:
            return matches[0], fld
        raise KeyError(
            f"parameter path {path!r} matches {len(matches)} statements; qualify it as <name>.<field>"
        )

    def with_param(self, path: str, value: float) -> "Netlist":
        stmt, fld = self.resolve_param(path)
        stmts = tuple(replace(s, **{fld: value}) if s is stmt else s for s in self.statements)
        return Netlist(stmts)

    def with_delta(self, delta: float) -> "Netlist":
        """Override the discretization length of every transmission line."""
        stmts = tuple(
            replace(s, delta=delta) if s.kind == "tline" else s for s in self.statements
        )
        return Netlist(stmts)

    def get_param(self, path: str) -> float:
        stmt, fld = self.resolve_param(path)
        return getattr(stmt, fld)


def _split_params(tokens, line, allowed, required, flags=()):
    """Split key=value tokens; returns dict with parsed floats."""
    params = {}
    for col, tok in tokens:
        if "=" not in tok:
            if tok in flags:
                params[tok] = True
                continue
            raise NetlistSyntaxError(f"expected key=value, got {tok!r}", line, col)
        key, _, raw = tok.partition("=")
        if key not in allowed:
            raise NetlistSyntaxError(f"unknown parameter {key!r}", line, col)
        if key in params:
            raise DuplicateNameError(f"parameter {key!r} given twice", line, col)
        if allowed[key] == "str":
            params[key] = raw
        elif allowed[key] == "int":
            try:
                params[key] = int(raw)
            except ValueError:
                raise NetlistSyntaxError(f"expected an integer for {key}, got {raw!r}", line, col)
        else:
            params[key] = parse_value(raw, line, col + len(key) + 1)
    for key in required:
        if key not in params:
            raise MissingParameterError(f"missing required parameter {key!r}", line)
    return params


def _require_positive(params, keys, line):
    for key in keys:
        if key in params and params[key] is not None and params[key] <= 0.0:
            raise NetlistSyntaxError(f"parameter {key!r} must be positive", line)


def parse_netlist(text: str) -> Netlist:
    """Parse netlist text; errors carry deterministic (line, col) positions."""
    statements = []
    names_seen = set()

    def check_name(name, what, line, col):
        if name in names_seen:
            raise DuplicateNameError(f"duplicate {what} name {name!r}", line, col)
        names_seen.add(name)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0]
        if not stripped.strip():
            continue
        tokens = []
        for m in re.finditer(r"\S+", stripped):
            tokens.append((m.start() + 1, m.group(0)))
        (col0, kw), rest = tokens[0], tokens[1:]

        def positional(n, what):
            if len(rest) < n:
                raise NetlistSyntaxError(f"{kw} needs {n} {what}", lineno, col0)
            return [t for _, t in rest[:n]], rest[n:]

        if kw == "node":
            (name,), _ = positional(1, "node name")
            statements.append(NodeStmt(name))
        elif kw == "branch":
            (n1, n2), tail = positional(2, "node names")
            params = _split_params(tail, lineno, {"L": "val", "C": "val", "R": "val"}, ())
            if not params:
                raise MissingParameterError("branch needs at least one of L, C, R", lineno)
            _require_positive(params, ("L", "C", "R"), lineno)
            statements.append(BranchStmt(n1, n2, params.get("L"), params.get("C"), params.get("R")))
        elif kw == "port":
            (name, n1, n2), _ = positional(3, "arguments")
            check_name(name, "port", lineno, col0)
            statements.append(PortStmt(name, n1, n2))
        elif kw == "tline":
            (prefix, n1, n2), tail = positional(3, "arguments")
            check_name(prefix, "tline", lineno, col0)
            params = _split_params(
                tail, lineno,
                {"len": "val", "z0": "val", "v": "val", "delta": "val", "short": "str"},
                ("len", "z0", "v", "delta"),
            )
            _require_positive(params, ("len", "z0", "v", "delta"), lineno)
            short = params.get("short", "none")
            if short not in ("left", "right", "both", "none"):
                raise NetlistSyntaxError(f"short must be left|right|both|none, got {short!r}", lineno)
            statements.append(
                TlineStmt(prefix, n1, n2, params["len"], params["z0"], params["v"], params["delta"], short)
            )
        elif kw == "tap":
            (tl, name), tail = positional(2, "arguments")
            check_name(name, "tap", lineno, col0)
            params = _split_params(tail, lineno, {"at": "val", "mirror": "str"}, ("at",))
            mirror = params.get("mirror")
            if mirror is not None:
                check_name(mirror, "tap", lineno, col0)
            statements.append(TapStmt(tl, name, params["at"], mirror))
        elif kw == "semi_infinite":
            (n1, n2), tail = positional(2, "node names")
            params = _split_params(tail, lineno, {"z0": "val", "port": "str"}, ("z0",))
            _require_positive(params, ("z0",), lineno)
            port = params.get("port")
            if port is not None:
                check_name(port, "port", lineno, col0)
            statements.append(SemiInfiniteStmt(n1, n2, params["z0"], port))
        elif kw == "transmon":
            (name, n1, n2), tail = positional(3, "arguments")
            check_name(name, "transmon", lineno, col0)
            params = _split_params(tail, lineno, {"Lj": "val", "Cj": "val"}, ("Lj", "Cj"))
            _require_positive(params, ("Lj", "Cj"), lineno)
            statements.append(TransmonStmt(name, n1, n2, params["Lj"], params["Cj"]))
        elif kw == "region":
            # '=' may stand alone or be glued to the region name
            if len(rest) >= 2 and rest[1][1] == "=":
                name = rest[0][1]
                targets = tuple(t for _, t in rest[2:])
            elif rest and rest[0][1].endswith("="):
                name = rest[0][1][:-1]
                targets = tuple(t for _, t in rest[1:])
            else:
                raise NetlistSyntaxError("region syntax: region <name> = <targets>", lineno, col0)
            if not name:
                raise NetlistSyntaxError("region needs a name", lineno, col0)
            if not targets:
                raise NetlistSyntaxError("region needs a tline prefix or node list", lineno, col0)
            check_name(name, "region", lineno, col0)
            statements.append(RegionStmt(name, targets))
        elif kw == "sweep":
            (path,), tail = positional(1, "parameter path")
            params = _split_params(
                tail, lineno, {"from": "val", "to": "val", "points": "int"},
                ("from", "to", "points"), flags=("log",),
            )
            if params["points"] < 1:
                raise NetlistSyntaxError("sweep needs points >= 1", lineno)
            statements.append(
                SweepStmt(path, params["from"], params["to"], params["points"], bool(params.get("log")))
            )
        else:
            raise NetlistSyntaxError(f"unknown statement {kw!r}", lineno, col0)
    return Netlist(tuple(statements))


def serialize_netlist(netlist: Netlist) -> str:
    """Canonical text form; parse(serialize(n)) == n."""
    lines = []
    for s in netlist.statements:
        if s.kind == "node":
            lines.append(f"node {s.name}")
        elif s.kind == "branch":
            parts = [f"branch {s.n1} {s.n2}"]
            for key, val in (("L", s.l), ("C", s.c), ("R", s.r)):
                if val is not None:
                    parts.append(f"{key}={val!r}")
            lines.append(" ".join(parts))
        elif s.kind == "port":
            lines.append(f"port {s.name} {s.n1} {s.n2}")
        elif s.kind == "tline":
            line = (
                f"tline {s.prefix} {s.n1} {s.n2} len={s.length!r} z0={s.z0!r} "
                f"v={s.v!r} delta={s.delta!r}"
            )
            if s.short != "none":
                line += f" short={s.short}"
            lines.append(line)
        elif s.kind == "tap":
            line = f"tap {s.tline} {s.name} at={s.at!r}"
            if s.mirror:
                line += f" mirror={s.mirror}"
            lines.append(line)
        elif s.kind == "semi_infinite":
            line = f"semi_infinite {s.n1} {s.n2} z0={s.z0!r}"
            if s.port:
                line += f" port={s.port}"
            lines.append(line)
        elif s.kind == "transmon":
            lines.append(f"transmon {s.name} {s.n1} {s.n2} Lj={s.lj!r} Cj={s.cj!r}")
        elif s.kind == "region":
            lines.append(f"region {s.name} = " + " ".join(s.targets))
        elif s.kind == "sweep":
            line = f"sweep {s.path} from={s.start!r} to={s.stop!r} points={s.points}"
            if s.log:
                line += " log"
            lines.append(line)
        else:
            raise ValueError(f"cannot serialize statement kind {s.kind!r}")
    return "\n".join(lines) + "\n"


@dataclass
class LadderFragment:
    """Node bookkeeping for one discretized transmission line."""

    prefix: str
    length: float
    z0: float
    v: float
    n_cells: int
    cell_length: float
    node_names: list[str]  # index 0..N, left to right

    def tap_index(self, x: float) -> int:
        if x < -0.5 * self.cell_length or x > self.length + 0.5 * self.cell_length:
            raise UnresolvedTapError(
                f"tap at {x:.6g} m lies beyond line {self.prefix!r} of length {self.length:.6g} m"
            )
        return min(max(int(round(x / self.cell_length)), 0), self.n_cells)

    def tap(self, x: float) -> str:
        return self.node_names[self.tap_index(x)]

    def realized_position(self, x: float) -> float:
        return self.tap_index(x) * self.cell_length


def lc_ladder(length: float, v: float, z0: float, delta: float, prefix: str = "tl",
              short: str = "none"):
    """Standalone LC-ladder approximation of a transmission line.

    Returns (CircuitGraph, LadderFragment).  Cells have series inductance
    (z0/v)*h and shunt capacitance h/(z0*v) split symmetrically: interior
    nodes carry a full cell capacitance, end nodes half.  Shorted ends
    are the ground node itself.
    """
    graph = CircuitGraph()
    left = GROUND if short in ("left", "both") else f"{prefix}_0"
    frag = _add_ladder(graph, prefix, length, v, z0, delta, left_node=left,
                       right_node=GROUND if short in ("right", "both") else None)
    return graph, frag


def _add_ladder(graph: CircuitGraph, prefix, length, v, z0, delta, left_node, right_node=None):
    n_cells = int(round(length / delta))
    if n_cells < 1:
        raise DegenerateDiscretizationError(
            f"line {prefix!r}: delta {delta:.6g} m exceeds length {length:.6g} m"
        )
    h = length / n_cells
    l_cell = (z0 / v) * h
    c_cell = h / (z0 * v)
    names = [left_node]
    for i in range(1, n_cells):
        names.append(f"{prefix}_{i}")
    names.append(right_node if right_node is not None else f"{prefix}_{n_cells}")
    for i in range(n_cells):
        graph.add_branch(names[i], names[i + 1], k=1.0 / l_cell)
    for j, node in enumerate(names):
        if node == graph.root:
            continue
        weight = 0.5 if j in (0, n_cells) else 1.0
        graph.add_branch(node, graph.root, c=weight * c_cell)
    return LadderFragment(prefix, length, z0, v, n_cells, h, names)


BUILTIN_CIRCUITS = ("fig1a", "fig1b", "fig1c")


def builtin_netlist_text(name: str) -> str:
    """Text of one of the packaged circuit netlists (fig1a, fig1b, fig1c)."""
    if name not in BUILTIN_CIRCUITS:
        raise KeyError(f"no builtin circuit {name!r}; choose from {BUILTIN_CIRCUITS}")
    path = importlib.resources.files("psocirc").joinpath("circuits", f"{name}.net")
    return path.read_text(encoding="utf-8")


@dataclass(frozen=True)
class BuildResult:
    """A built circuit: model, coordinate regions, ports and diagnostics."""

    model: object  # PSOModel
    region_map: dict  # region name -> tuple of coordinate indices
    port_map: dict  # port name -> P column index
    graph: CircuitGraph
    maps: object  # TreeMaps
    diagnostics: dict
    netlist: Netlist


def build_circuit(netlist: Netlist) -> BuildResult:
    """Expand netlist primitives into one merged circuit and assemble it.

    Shared node names merge directly.  Taps snap to the nearest ladder
    node; the realized positions and cell lengths land in diagnostics.
    """
    graph = CircuitGraph()
    alias: dict[str, str] = {}
    fragments: dict[str, LadderFragment] = {}
    diagnostics = {"realized_delta": {}, "realized_taps": {}}

    def resolve(name: str) -> str:
        while name in alias:
            name = alias[name]
        return name

    # Pass 1: expand transmission lines and resolve tap aliases.
    for s in netlist.statements:
        if s.kind == "tline":
            left = GROUND if s.short in ("left", "both") else s.n1
            right = GROUND if s.short in ("right", "both") else s.n2
            frag = _add_ladder(graph, s.prefix, s.length, s.v, s.z0, s.delta,
                               left_node=left, right_node=right)
            fragments[s.prefix] = frag
            diagnostics["realized_delta"][s.prefix] = frag.cell_length
    for s in netlist.statements:
        if s.kind == "tap":
            frag = fragments.get(s.tline)
            if frag is None:
                raise UnresolvedTapError(f"tap {s.name!r} references unknown line {s.tline!r}")
            alias[s.name] = frag.tap(s.at)
            diagnostics["realized_taps"][s.name] = frag.realized_position(s.at)
            if s.mirror:
                alias[s.mirror] = frag.tap(frag.length - s.at)
                diagnostics["realized_taps"][s.mirror] = frag.realized_position(frag.length - s.at)

    # Pass 2: lumped elements, terminations and ports in declaration order.
    for s in netlist.statements:
        if s.kind == "node":
            graph.add_vertex(resolve(s.name))
        elif s.kind == "branch":
            graph.add_branch(
                resolve(s.n1), resolve(s.n2),
                k=1.0 / s.l if s.l else 0.0,
                g=1.0 / s.r if s.r else 0.0,
                c=s.c if s.c else 0.0,
            )
        elif s.kind == "transmon":
            graph.add_branch(resolve(s.n1), resolve(s.n2), k=1.0 / s.lj, c=s.cj)
        elif s.kind == "semi_infinite":
            graph = terminate_semi_infinite(graph, (resolve(s.n1), resolve(s.n2)), s.z0, s.port)
        elif s.kind == "port":
            graph.add_port(s.name, resolve(s.n1), resolve(s.n2))

    maps = build_tree_maps(graph)
    model = assemble_pso(graph, maps)

    coord_of = {}
    for i, (child, _) in enumerate(maps.tree_edges):
        coord_of[child] = i

    region_map: dict[str, tuple[int, ...]] = {}
    claimed: dict[int, str] = {}
    for s in netlist.statements:
        if s.kind != "region":
            continue
        nodes: list[str] = []
        if len(s.targets) == 1 and s.targets[0] in fragments:
            nodes = [n for n in fragments[s.targets[0]].node_names if n != GROUND]
        else:
            nodes = [resolve(t) for t in s.targets]
        indices = []
        for node in nodes:
            node = resolve(node)
            if node == GROUND:
                continue
            if node not in coord_of:
                raise UnresolvedTapError(f"region {s.name!r} references unknown node {node!r}")
            idx = coord_of[node]
            if idx in claimed:
                raise DuplicateNameError(
                    f"coordinate {node!r} belongs to regions {claimed[idx]!r} and {s.name!r}"
                )
            claimed[idx] = s.name
            indices.append(idx)
        region_map[s.name] = tuple(sorted(indices))

    port_map = {name: j for j, (name, _, _) in enumerate(graph.ports)}
    return BuildResult(model, region_map, port_map, graph, maps, diagnostics, netlist)
