"""Exception hierarchy; the CLI maps these onto exit codes 2 and 3."""


class ValidationError(ValueError):
    """Bad input: malformed files, inconsistent sizes, violated preconditions."""


class NumericalError(ArithmeticError):
    """Solver breakdown, non-finite values, or divergence during optimization."""


class OFFParseError(ValidationError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class MeshValidationError(ValidationError):
    def __init__(self, message: str, faces=()):
        self.faces = list(faces)
        if self.faces:
            shown = ", ".join(str(f) for f in self.faces[:20])
            more = "" if len(self.faces) <= 20 else f" (+{len(self.faces) - 20} more)"
            message = f"{message}; offending faces: {shown}{more}"
        super().__init__(message)


class NotSPDError(NumericalError):
    def __init__(self, pivot: int):
        self.pivot = pivot
        super().__init__(f"matrix is not SPD: non-positive pivot at index {pivot}")
