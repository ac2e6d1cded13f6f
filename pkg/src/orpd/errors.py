"""Exception hierarchy shared by the orpd modules."""


class OrpdError(Exception):
    """Base class for every error raised by this package."""


class CaseFormatError(OrpdError):
    """A MATPOWER case file could not be parsed."""


class MissingMatrix(CaseFormatError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"required matrix 'mpc.{name}' not found")


class MalformedRow(CaseFormatError):
    def __init__(self, matrix: str, line: int, detail: str = ""):
        self.matrix = matrix
        self.line = line
        msg = f"malformed row in mpc.{matrix} at line {line}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class NonNumericEntry(CaseFormatError):
    def __init__(self, matrix: str, line: int, col: int, token: str = ""):
        self.matrix = matrix
        self.line = line
        self.col = col
        super().__init__(
            f"non-numeric entry {token!r} in mpc.{matrix} at line {line}, column {col}"
        )


class UnsupportedCost(CaseFormatError):
    """Raised for gencost rows that are not polynomial of degree <= 2."""


class NetworkError(OrpdError):
    """The case data does not describe a usable network."""


class InvalidCase(NetworkError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = "; ".join(str(d) for d in self.diagnostics)
        super().__init__(f"case failed validation: {lines}")


class DisconnectedNetwork(NetworkError):
    pass


class NoReferenceBus(NetworkError):
    pass


class MultipleReferenceBuses(NetworkError):
    pass


class ZeroImpedanceBranch(NetworkError):
    def __init__(self, branch_id: int):
        self.branch_id = branch_id
        super().__init__(f"branch {branch_id} has zero series impedance")


class UnsupportedPhaseShift(NetworkError):
    def __init__(self, branch_id: int, shift: float):
        self.branch_id = branch_id
        super().__init__(f"branch {branch_id} has nonzero phase shift {shift} deg")


class NegativeQuadCoefficient(OrpdError):
    pass


class CliqueVertexOutOfRange(OrpdError):
    pass


class DegenerateTapRange(OrpdError):
    pass


class InfeasibleSeedPoint(OrpdError):
    pass


class NonpositiveVkk(OrpdError):
    def __init__(self, bus: int):
        self.bus = bus
        super().__init__(f"V_kk is not positive at bus index {bus}")


class NonpositiveWll(OrpdError):
    def __init__(self, branch: int):
        self.branch = branch
        super().__init__(f"W_ll is not positive for branch {branch}")


class RecoveryOutOfBounds(OrpdError):
    pass


class NonpositiveUpper(OrpdError):
    pass


class NoFeasibleUpperBound(OrpdError):
    pass


class ConfigError(OrpdError):
    pass
