"""Terms of the trait calculus: trait expressions, bodies, methods, tables."""
from dataclasses import dataclass, replace
from typing import Iterator, Optional, Tuple

from cbcforge.kernel import Contract, Expr, TrueP


@dataclass(frozen=True)
class Method:
    spec: Contract
    return_type: str
    name: str
    params: Tuple[Tuple[str, str], ...] = ()
    body: Optional[Expr] = None
    measure: Optional[Expr] = None

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(tuple(p) for p in self.params))

    @property
    def is_abstract(self) -> bool:
        return self.body is None

    @property
    def param_names(self) -> Tuple[str, ...]:
        return tuple(n for n, _ in self.params)

    @property
    def param_types(self) -> Tuple[str, ...]:
        return tuple(t for _, t in self.params)

    def header(self) -> "Method":
        return replace(self, body=None)

    def is_getter(self) -> bool:
        return self.is_abstract and not self.params


def trivial_spec() -> Contract:
    return Contract(TrueP(), TrueP())


@dataclass(frozen=True)
class Body:
    is_interface: bool = False
    interfaces: Tuple[str, ...] = ()
    methods: Tuple[Method, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "interfaces", tuple(self.interfaces))
        object.__setattr__(self, "methods", tuple(self.methods))

    def method(self, name: str) -> Optional[Method]:
        for m in self.methods:
            if m.name == name:
                return m
        return None

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(m.name for m in self.methods)

    def with_method(self, m: Method) -> "Body":
        if self.method(m.name) is None:
            return replace(self, methods=self.methods + (m,))
        return replace(self, methods=tuple(m if x.name == m.name else x for x in self.methods))

    def getters(self) -> Tuple[Method, ...]:
        return tuple(m for m in self.methods if m.is_getter())

    def abstract_methods(self) -> Tuple[Method, ...]:
        return tuple(m for m in self.methods if m.is_abstract)


class TraitExpr:
    __slots__ = ()


@dataclass(frozen=True)
class Lit(TraitExpr):
    body: Body


@dataclass(frozen=True)
class Ref(TraitExpr):
    trait: str


@dataclass(frozen=True)
class Plus(TraitExpr):
    lhs: TraitExpr
    rhs: TraitExpr


@dataclass(frozen=True)
class MakeAbstract(TraitExpr):
    inner: TraitExpr
    method: str


TRAIT, CLASS = "trait", "class"


@dataclass(frozen=True)
class TraitDecl:
    name: str
    kind: str
    expr: TraitExpr
    origin: str = ""


@dataclass(frozen=True)
class TraitTable:
    decls: Tuple[TraitDecl, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "decls", tuple(self.decls))

    def __iter__(self) -> Iterator[TraitDecl]:
        return iter(self.decls)

    def __len__(self) -> int:
        return len(self.decls)

    def get(self, name: str) -> Optional[TraitDecl]:
        for d in self.decls:
            if d.name == name:
                return d
        return None

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(d.name for d in self.decls)

    def merged(self, other: "TraitTable") -> "TraitTable":
        return TraitTable(self.decls + other.decls)
