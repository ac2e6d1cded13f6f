"""Per-unit network model: buses, branches, generators, shunts and tap grids."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import case_io as cio
from .errors import (
    DisconnectedNetwork,
    InvalidCase,
    MultipleReferenceBuses,
    NoReferenceBus,
    UnsupportedCost,
    UnsupportedPhaseShift,
    ZeroImpedanceBranch,
)

DEFAULT_TAP_MIN = 0.9
DEFAULT_TAP_MAX = 1.1
DEFAULT_TAP_STEP = 0.0125


@dataclass(frozen=True)
class TapGrid:
    t_min: float = DEFAULT_TAP_MIN
    t_max: float = DEFAULT_TAP_MAX
    step: float = DEFAULT_TAP_STEP

    def __post_init__(self):
        if not self.t_min > 0:
            raise ValueError("tap grid needs t_min > 0")
        if self.t_max < self.t_min or self.step <= 0:
            raise ValueError("tap grid needs t_min <= t_max and step > 0")

    @property
    def count(self) -> int:
        return int(round((self.t_max - self.t_min) / self.step)) + 1

    @property
    def eta_max(self) -> int:
        """Number of steps on either side of the central setting."""
        return (self.count - 1) // 2

    @property
    def values(self) -> np.ndarray:
        return self.t_min + self.step * np.arange(self.count)


DEFAULT_TAP_GRID = TapGrid()


def tap_grid_round(grid: TapGrid, t: float) -> float:
    """Nearest grid value to ``t``; ties go to the larger value, outside values clamp."""
    if t <= grid.t_min:
        return float(grid.values[0])
    if t >= grid.t_max:
        return float(grid.values[-1])
    pos = (t - grid.t_min) / grid.step
    lo = math.floor(pos)
    # exact decimal midpoints (e.g. 1.00625) come out of the division as x.4999999
    frac = round(pos - lo, 9)
    idx = lo + 1 if frac >= 0.5 else lo
    return float(grid.values[min(idx, grid.count - 1)])


@dataclass(frozen=True)
class Bus:
    id: int
    external_id: int
    p_demand: float
    q_demand: float
    v_min: float
    v_max: float
    is_reference: bool = False


@dataclass(frozen=True)
class ShuntElement:
    bus: int
    g_shunt: float
    b_shunt: float


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    cost_c2: float = 0.0
    cost_c1: float = 0.0
    cost_c0: float = 0.0


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    series_admittance: complex
    shunt_susceptance_total: float
    thermal_limit: float | None = None
    tap: TapGrid | None = None
    nominal_ratio: float = 1.0

    @property
    def has_tap(self) -> bool:
        return self.tap is not None


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    shunts: tuple[ShuntElement, ...]
    tap_branches: tuple[int, ...]
    base_mva: float
    name: str = ""
    gens_by_bus: dict = field(default_factory=dict, compare=False)

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @property
    def reference_bus(self) -> int:
        return next(b.id for b in self.buses if b.is_reference)

    @property
    def shunt_by_bus(self) -> dict[int, ShuntElement]:
        return {s.bus: s for s in self.shunts}

    def to_json(self) -> str:
        """Debug dump: arrays of buses/branches/generators/shunts."""
        def enc(obj):
            d = asdict(obj)
            for k, v in list(d.items()):
                if isinstance(v, complex):
                    d[k] = [v.real, v.imag]
            return d
        payload = {
            "name": self.name,
            "base_mva": self.base_mva,
            "buses": [enc(b) for b in self.buses],
            "branches": [enc(b) for b in self.branches],
            "generators": [enc(g) for g in self.generators],
            "shunts": [enc(s) for s in self.shunts],
            "tap_branches": list(self.tap_branches),
        }
        return json.dumps(payload, indent=1, sort_keys=True)


def build_network(raw: cio.RawCase, tap_grid: TapGrid = DEFAULT_TAP_GRID) -> Network:
    """Convert a validated RawCase to the per-unit model.

    Every branch with a nonzero TAP entry becomes a tap changer with
    ``tap_grid`` (its nominal ratio is kept only for reference); every bus
    with nonzero GS or BS gets one switchable shunt.
    """
    errs = cio.errors_only(cio.validate_case(raw))
    for d in errs:
        if d.code == "PhaseShift":
            l = d.where[1]
            raise UnsupportedPhaseShift(l + 1, float(raw.branch[l, cio.SHIFT]))
        if d.code == "UnsupportedCost":
            raise UnsupportedCost(d.message)
    if errs:
        raise InvalidCase(errs)

    base = raw.base_mva
    index = {int(ext): k for k, ext in enumerate(raw.bus[:, cio.BUS_I].astype(int))}
    ref = [k for k, row in enumerate(raw.bus) if int(row[cio.BUS_TYPE]) == cio.REF_BUS_TYPE]
    if not ref:
        raise NoReferenceBus("no bus of type 3")
    if len(ref) > 1:
        ext = [int(raw.bus[k, cio.BUS_I]) for k in ref]
        raise MultipleReferenceBuses(f"reference buses {ext}")

    buses = tuple(
        Bus(
            id=k,
            external_id=int(row[cio.BUS_I]),
            p_demand=row[cio.PD] / base,
            q_demand=row[cio.QD] / base,
            v_min=float(row[cio.VMIN]),
            v_max=float(row[cio.VMAX]),
            is_reference=(k == ref[0]),
        )
        for k, row in enumerate(raw.bus)
    )
    shunts = tuple(
        ShuntElement(bus=k, g_shunt=row[cio.GS] / base, b_shunt=row[cio.BS] / base)
        for k, row in enumerate(raw.bus)
        if row[cio.GS] != 0 or row[cio.BS] != 0
    )

    branches = []
    for l, row in enumerate(raw.branch):
        if row[cio.BR_STATUS] <= 0:
            continue
        r, x = row[cio.BR_R], row[cio.BR_X]
        if r == 0 and x == 0:
            raise ZeroImpedanceBranch(l + 1)
        rate = row[cio.RATE_A]
        ratio = row[cio.TAP]
        branches.append(Branch(
            id=len(branches),
            from_bus=index[int(row[cio.F_BUS])],
            to_bus=index[int(row[cio.T_BUS])],
            series_admittance=1.0 / complex(r, x),
            shunt_susceptance_total=float(row[cio.BR_B]),
            thermal_limit=rate / base if rate > 0 else None,
            tap=tap_grid if ratio != 0 else None,
            nominal_ratio=float(ratio) if ratio != 0 else 1.0,
        ))

    gens = []
    gencost = raw.gencost
    for g, row in enumerate(raw.gen):
        if row[cio.GEN_STATUS] <= 0:
            continue
        c2 = c1 = c0 = 0.0
        if gencost is not None:
            crow = gencost[g]
            n = int(crow[cio.NCOST])
            coeffs = list(crow[cio.COST: cio.COST + n])
            coeffs = [0.0] * (3 - n) + coeffs  # highest order first
            c2, c1, c0 = coeffs
        gens.append(Generator(
            id=len(gens),
            bus=index[int(row[cio.GEN_BUS])],
            p_min=row[cio.PMIN] / base,
            p_max=row[cio.PMAX] / base,
            q_min=row[cio.QMIN] / base,
            q_max=row[cio.QMAX] / base,
            cost_c2=c2 * base**2,
            cost_c1=c1 * base,
            cost_c0=c0,
        ))

    n = len(buses)
    if branches:
        f = [b.from_bus for b in branches]
        t = [b.to_bus for b in branches]
        adj = sp.coo_matrix((np.ones(len(f)), (f, t)), shape=(n, n))
        ncomp, _ = connected_components(adj, directed=False)
    else:
        ncomp = n
    if ncomp > 1:
        raise DisconnectedNetwork(f"{ncomp} connected components")

    gens_by_bus: dict[int, list[int]] = {}
    for g in gens:
        gens_by_bus.setdefault(g.bus, []).append(g.id)

    return Network(
        buses=buses,
        branches=tuple(branches),
        generators=tuple(gens),
        shunts=shunts,
        tap_branches=tuple(b.id for b in branches if b.tap is not None),
        base_mva=float(base),
        name=raw.name,
        gens_by_bus=gens_by_bus,
    )


def load_network(path, tap_grid: TapGrid = DEFAULT_TAP_GRID) -> Network:
    return build_network(cio.read_case(path), tap_grid)


def branch_flow(net: Network, branch: Branch, v_from: complex, v_to: complex,
                t: float = 1.0) -> tuple[complex, complex]:
    """Complex power injected into ``branch`` at its from and to ends.

    ``t`` scales the from-side (tap side) voltage; pass 1 for plain lines.
    """
    y = branch.series_admittance
    ysh = 1j * branch.shunt_susceptance_total / 2
    w = v_from / t
    s_from = w * np.conj((ysh + y) * w - y * v_to)
    s_to = v_to * np.conj(-y * w + (ysh + y) * v_to)
    return complex(s_from), complex(s_to)


def admittance_matrices(net: Network, taps=None, shunt_on=None):
    """Sparse Ybus, Yf, Yt with fixed tap ratios and shunt switches.

    ``taps`` maps tap-branch id -> ratio (missing ids use 1.0); ``shunt_on``
    maps shunt bus -> 0/1 (missing buses are off).
    """
    taps = taps or {}
    shunt_on = shunt_on or {}
    n, nl = net.n_bus, net.n_branch
    f = np.array([b.from_bus for b in net.branches], dtype=int)
    t = np.array([b.to_bus for b in net.branches], dtype=int)
    y = np.array([b.series_admittance for b in net.branches], dtype=complex)
    bc = np.array([b.shunt_susceptance_total for b in net.branches])
    tau = np.array([taps.get(b.id, 1.0) if b.has_tap else 1.0 for b in net.branches])
    ytt = y + 0.5j * bc
    yff = ytt / tau**2
    yft = -y / tau
    ytf = -y / tau
    rows = np.arange(nl)
    Yf = sp.csr_matrix((np.r_[yff, yft], (np.r_[rows, rows], np.r_[f, t])), shape=(nl, n))
    Yt = sp.csr_matrix((np.r_[ytf, ytt], (np.r_[rows, rows], np.r_[f, t])), shape=(nl, n))
    Cf = sp.csr_matrix((np.ones(nl), (rows, f)), shape=(nl, n))
    Ct = sp.csr_matrix((np.ones(nl), (rows, t)), shape=(nl, n))
    ysh = np.zeros(n, dtype=complex)
    for s in net.shunts:
        ysh[s.bus] = shunt_on.get(s.bus, 0) * complex(s.g_shunt, s.b_shunt)
    Ybus = (Cf.T @ Yf + Ct.T @ Yt + sp.diags(ysh)).tocsr()
    return Ybus, Yf, Yt, Cf, Ct
