from typing import Any, Dict, List, Optional


class CbcError(Exception):
    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ParseError(CbcError):
    def __init__(self, detail: str, line: int = 0, column: int = 0, source: Optional[str] = None):
        where = f"{source or '<input>'}:{line}:{column}"
        super().__init__(f"{where}: {detail}")
        self.line = line
        self.column = column
        self.source = source


class KernelError(CbcError):
    """Ill-formed expression, predicate, statement or contract."""


class WpError(CbcError):
    pass


class UnknownMethod(WpError):
    pass


class UndeclaredVariable(WpError):
    pass


class SmtError(CbcError):
    """Obligation outside the fragment the SMT-LIB export covers."""


class RefinementError(CbcError):
    pass


class BlockError(CbcError):
    pass


class TraitError(CbcError):
    pass


class TypingError(TraitError):
    pass


class CompositionError(TraitError):
    pass


class ConflictError(CompositionError):
    pass


class SignatureMismatch(CompositionError):
    pass


class SpecIncompatible(CompositionError):
    def __init__(self, detail: str, counterexample: Optional[Dict[str, Any]] = None):
        super().__init__(detail)
        self.counterexample = counterexample


class FlattenError(TraitError):
    def __init__(self, detail: str, diagnostics: Optional[List[Any]] = None):
        super().__init__(detail)
        self.diagnostics = list(diagnostics or [])


class StuckError(TraitError):
    pass


class FuelExhausted(TraitError):
    def __init__(self, detail: str, steps: int = 0):
        super().__init__(detail)
        self.steps = steps
