"""Recover shunt/tap settings from a relaxation solution, round them, and measure gaps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .conic import SolverResult
from .errors import NonpositiveUpper, NonpositiveVkk, NonpositiveWll, RecoveryOutOfBounds
from .network import Network, tap_grid_round
from .relaxations import LiftedVars, RelaxationKind

CLAMP_TOL = 1e-6


@dataclass
class RelaxationSolution:
    """Numeric values of the lifted variables at a relaxation optimum."""

    kind: RelaxationKind
    bound: float
    vkk: np.ndarray
    wll: dict[int, float]
    wkl: dict[int, float]
    wlm: dict[int, complex]
    xi: dict[int, float]
    pg: np.ndarray
    qg: np.ndarray
    vkm: dict[tuple[int, int], complex] = field(default_factory=dict)  # per branch bus pair
    status: str = "Optimal"
    solve_time: float = 0.0
    iterations: int = 0
    reduced_accuracy: bool = False

    @classmethod
    def from_result(cls, lifted: LiftedVars, res: SolverResult) -> "RelaxationSolution":
        if res.primal is None:
            raise ValueError(f"no primal point to recover from (status {res.status})")
        x = res.primal
        ev = lambda e: e.value(x)  # noqa: E731
        V = lifted.V
        vkm = {}
        for k, m in lifted.branch_pairs:
            if V.has_entry(k, m):
                re, im = V.entry(k, m)
                vkm[k, m] = complex(ev(re), ev(im))
        return cls(
            kind=lifted.kind,
            bound=float(res.objective),
            vkk=np.array([ev(lifted.V.re(k, k)) for k in range(lifted.V.side)]),
            wll={l: ev(tv.wll) for l, tv in lifted.W.items()},
            wkl={l: ev(tv.wkl) for l, tv in lifted.W.items()},
            wlm={l: complex(ev(tv.wlm_re), ev(tv.wlm_im)) for l, tv in lifted.W.items()},
            xi={k: ev(e) for k, e in lifted.xi.items()},
            pg=np.array([ev(e) for e in lifted.pg]),
            qg=np.array([ev(e) for e in lifted.qg]),
            vkm=vkm,
            status=res.status,
            solve_time=res.solve_time,
            iterations=res.iterations,
            reduced_accuracy=res.reduced_accuracy,
        )


@dataclass
class DiscreteAssignment:
    u_hat: dict[int, float]
    t_hat: dict[int, float]
    u_round: dict[int, int] = field(default_factory=dict)
    t_round: dict[int, float] = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)

    @property
    def is_rounded(self) -> bool:
        return len(self.u_round) == len(self.u_hat) and len(self.t_round) == len(self.t_hat)

    def to_dict(self) -> dict:
        return {
            "u_hat": {str(k): v for k, v in sorted(self.u_hat.items())},
            "t_hat": {str(k): v for k, v in sorted(self.t_hat.items())},
            "u_round": {str(k): v for k, v in sorted(self.u_round.items())},
            "t_round": {str(k): v for k, v in sorted(self.t_round.items())},
        }


def _clamp(value: float, lo: float, hi: float, what: str, diags: list[str]) -> float:
    if lo <= value <= hi:
        return value
    excess = lo - value if value < lo else value - hi
    if excess > CLAMP_TOL:
        raise RecoveryOutOfBounds(f"{what} = {value:.9g} outside [{lo}, {hi}] by {excess:.3e}")
    diags.append(f"{what} clamped by {excess:.3e}")
    return min(max(value, lo), hi)


def recover_continuous(net: Network, sol: RelaxationSolution) -> DiscreteAssignment:
    """Continuous shunt and tap values: ``u = xi / V_kk`` and ``t = sqrt(V_kk / W_ll)``.

    The alternative tap estimate ``V_kk / W_kl`` agrees only for rank-one
    blocks; their difference is recorded as a diagnostic.
    """
    diags: list[str] = []
    u_hat = {}
    for s in net.shunts:
        vkk = sol.vkk[s.bus]
        if not vkk > 0:
            raise NonpositiveVkk(s.bus)
        u_hat[s.bus] = _clamp(sol.xi[s.bus] / vkk, 0.0, 1.0, f"u[{s.bus}]", diags)
    t_hat = {}
    for l in net.tap_branches:
        br = net.branches[l]
        vkk = sol.vkk[br.from_bus]
        if not vkk > 0:
            raise NonpositiveVkk(br.from_bus)
        wll = sol.wll[l]
        if not wll > 0:
            raise NonpositiveWll(l)
        t = math.sqrt(vkk / wll)
        wkl = sol.wkl[l]
        if wkl > 0:
            alt = vkk / wkl
            if abs(alt - t) > CLAMP_TOL:
                diags.append(f"t[{l}]: sqrt(V_kk/W_ll) = {t:.6f}, V_kk/W_kl = {alt:.6f}")
        t_hat[l] = _clamp(t, br.tap.t_min, br.tap.t_max, f"t[{l}]", diags)
    return DiscreteAssignment(u_hat=u_hat, t_hat=t_hat, diagnostics=diags)


def round_assignment(net: Network, cont: DiscreteAssignment) -> DiscreteAssignment:
    """Nearest discrete values; a shunt exactly halfway switches on."""
    u_round = {k: 1 if u >= 0.5 else 0 for k, u in cont.u_hat.items()}
    t_round = {l: tap_grid_round(net.branches[l].tap, t) for l, t in cont.t_hat.items()}
    return replace(cont, u_round=u_round, t_round=t_round, diagnostics=list(cont.diagnostics))


def optimality_gap(bound: float, upper: float) -> float:
    """Percent gap ``100 (1 - bound / upper)``."""
    if not upper > 0:
        raise NonpositiveUpper(f"upper bound {upper} is not positive")
    return 100.0 * (1.0 - bound / upper)
