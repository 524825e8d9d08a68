"""Particle-system specifications: loading, validation, and rate synthesis.

A model is a finite local state space with two integer-valued conserved
quantities (zeta, eta), a strictly positive single-site measure pi, and
sparse nearest-neighbor pair-jump rates.  Validation checks, exhaustively
at desk scale:

  (A) every positive-rate jump conserves the pair sums of zeta and eta,
  (B) each conservation sector of the torus is a single strongly
      connected component under positive-rate jumps,
  (C) the cyclic sums Q(w1,w2) + Q(w2,w3) + Q(w3,w1) all vanish, which
      makes the product measure pi^n stationary.

Rates can also be synthesized: conditions (A) and (C) are linear in the
rate function, so feasibility on a prescribed support is a linear program.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csgraph

from .errors import (
    InfeasibleSupportError,
    ParseError,
    SizeLimitError,
    SpecInvariantError,
)

RateKey = tuple[str, str, str, str]

CYCLIC_TOL = 1e-10
PI_SUM_TOL = 1e-12


@dataclass(eq=False)
class ModelSpec:
    """A lattice model: states, conserved quantities, base measure, rates.

    ``rates`` maps (w1, w2, w1', w2') label tuples to nonnegative jump
    rates of the move (w1, w2) -> (w1', w2') on a directed bond.
    """

    name: str
    states: tuple[str, ...]
    zeta: dict[str, int]
    eta: dict[str, int]
    base_measure: dict[str, float]
    rates: dict[RateKey, float]

    # -- index-based views used by the numeric modules ------------------

    @property
    def n_states(self) -> int:
        return len(self.states)

    def index(self, label: str) -> int:
        return self.states.index(label)

    def zeta_values(self) -> np.ndarray:
        return np.array([self.zeta[s] for s in self.states], dtype=np.int64)

    def eta_values(self) -> np.ndarray:
        return np.array([self.eta[s] for s in self.states], dtype=np.int64)

    def pi_values(self) -> np.ndarray:
        return np.array([self.base_measure[s] for s in self.states])

    def rate_entries(self) -> list[tuple[int, int, int, int, float]]:
        """Rates as (i1, i2, j1, j2, r) index tuples, in a stable order."""
        pos = {s: k for k, s in enumerate(self.states)}
        out = []
        for (a, b, c, d), r in sorted(self.rates.items()):
            out.append((pos[a], pos[b], pos[c], pos[d], float(r)))
        return out

    def pair_rate_table(self) -> np.ndarray:
        """Total jump rate per ordered state pair, shape (K, K)."""
        K = self.n_states
        tot = np.zeros((K, K))
        for i1, i2, _, _, r in self.rate_entries():
            tot[i1, i2] += r
        return tot

    def max_pair_rate(self) -> float:
        return float(self.pair_rate_table().max(initial=0.0))


@dataclass
class ValidationReport:
    """Outcome of the exhaustive desk-scale checks of conditions (A)-(C)."""

    model_name: str
    condition_a_ok: bool
    condition_b_ok: bool
    tested_torus_sizes: tuple[int, ...]
    condition_c_ok: bool
    max_cyclic_residual: float
    cyclic_tolerance: float
    stationarity_residual: float
    stationarity_torus_size: int
    violations: list[str] = field(default_factory=list)

    @property
    def all_ok(self) -> bool:
        return self.condition_a_ok and self.condition_b_ok and self.condition_c_ok

    def as_dict(self) -> dict:
        return {
            "model": self.model_name,
            "condition_a_ok": self.condition_a_ok,
            "condition_b_ok": self.condition_b_ok,
            "tested_torus_sizes": list(self.tested_torus_sizes),
            "condition_c_ok": self.condition_c_ok,
            "max_cyclic_residual": self.max_cyclic_residual,
            "cyclic_tolerance": self.cyclic_tolerance,
            "stationarity_residual": self.stationarity_residual,
            "stationarity_torus_size": self.stationarity_torus_size,
            "all_ok": self.all_ok,
            "violations": list(self.violations),
        }

    def as_text(self) -> str:
        mark = lambda ok: "ok" if ok else "FAILED"  # noqa: E731
        lines = [
            f"model: {self.model_name}",
            f"condition (A) pair conservation: {mark(self.condition_a_ok)}",
            f"condition (B) sector irreducibility on tori "
            f"{list(self.tested_torus_sizes)}: {mark(self.condition_b_ok)}",
            f"condition (C) cyclic balance: {mark(self.condition_c_ok)} "
            f"(max residual {self.max_cyclic_residual:.3e}, "
            f"tolerance {self.cyclic_tolerance:.1e})",
            f"stationarity max-norm of pi^n L^n at n={self.stationarity_torus_size}: "
            f"{self.stationarity_residual:.3e}",
            f"verdict: {'VALID' if self.all_ok else 'INVALID'}",
        ]
        for v in self.violations:
            lines.append(f"  - {v}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# invariants and loading
# ---------------------------------------------------------------------------


def check_spec(spec: ModelSpec) -> None:
    """Raise SpecInvariantError naming the offending field if invalid."""
    if spec.n_states < 3:
        raise SpecInvariantError(
            f"states: need at least 3 local states, got {spec.n_states}"
        )
    if len(set(spec.states)) != spec.n_states:
        raise SpecInvariantError("states: duplicate labels")
    for table, nm in ((spec.zeta, "zeta"), (spec.eta, "eta"), (spec.base_measure, "pi")):
        missing = [s for s in spec.states if s not in table]
        if missing:
            raise SpecInvariantError(f"{nm}: missing entries for {missing}")
    pi = spec.pi_values()
    if not np.all(np.isfinite(pi)) or np.any(pi <= 0):
        raise SpecInvariantError("base_measure: entries must be strictly positive")
    if abs(pi.sum() - 1.0) > PI_SUM_TOL:
        raise SpecInvariantError(
            f"base_measure: does not sum to 1 (off by {pi.sum() - 1.0:.3e})"
        )
    z = spec.zeta_values().astype(float)
    e = spec.eta_values().astype(float)
    ones = np.ones(spec.n_states)
    if np.linalg.matrix_rank(np.vstack([ones, z, e])) < 3:
        raise SpecInvariantError(
            "zeta/eta: linearly dependent conserved quantities "
            "(zeta, eta and the constant must be independent)"
        )
    names = set(spec.states)
    for key, r in spec.rates.items():
        if len(key) != 4 or any(s not in names for s in key):
            raise SpecInvariantError(f"rates: unknown state label in {key}")
        if not np.isfinite(r) or r < 0:
            raise SpecInvariantError(f"rates: entry {key} has invalid rate {r}")
        if key[:2] == key[2:]:
            raise SpecInvariantError(f"rates: entry {key} maps a pair to itself")


def _parse_sections(text: str, path: str) -> dict[str, list[str]]:
    sections: dict[str, list[str]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            sections.setdefault(current, [])
        elif current is None:
            raise ParseError(f"{path}:{lineno}: content before any [section] header")
        else:
            sections[current].append(line)
    return sections


def _parse_label_value(lines: list[str], section: str, path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for line in lines:
        parts = line.replace(":", " ").split()
        if len(parts) != 2:
            raise ParseError(f"{path}: [{section}] line not 'label value': {line!r}")
        out[parts[0]] = parts[1]
    return out


def parse_model_spec(text: str, *, name: str = "<string>") -> ModelSpec:
    """Parse the sectioned model-spec text format (see the README)."""
    sections = _parse_sections(text, name)
    required = {"states", "zeta", "eta", "pi", "rates"}
    missing = required - sections.keys()
    if missing:
        raise ParseError(f"{name}: missing sections {sorted(missing)}")

    states = tuple(itertools.chain.from_iterable(s.split() for s in sections["states"]))
    if not states:
        raise ParseError(f"{name}: [states] section is empty")

    def int_map(section: str) -> dict[str, int]:
        raw = _parse_label_value(sections[section], section, name)
        try:
            return {k: int(v) for k, v in raw.items()}
        except ValueError as exc:
            raise ParseError(f"{name}: [{section}] needs integers: {exc}") from None

    raw_pi = _parse_label_value(sections["pi"], "pi", name)
    try:
        pi = {k: float(v) for k, v in raw_pi.items()}
    except ValueError as exc:
        raise ParseError(f"{name}: [pi] needs decimals: {exc}") from None

    rates: dict[RateKey, float] = {}
    for line in sections["rates"]:
        try:
            lhs, rest = line.split("->")
            rhs, rate_s = rest.split(":")
            w1, w2 = lhs.split()
            w1p, w2p = rhs.split()
            rate = float(rate_s)
        except ValueError:
            raise ParseError(
                f"{name}: rate line must be \"w1 w2 -> w1' w2' : rate\", got {line!r}"
            ) from None
        key = (w1, w2, w1p, w2p)
        rates[key] = rates.get(key, 0.0) + rate

    spec = ModelSpec(
        name=name,
        states=states,
        zeta=int_map("zeta"),
        eta=int_map("eta"),
        base_measure=pi,
        rates=rates,
    )
    check_spec(spec)
    return spec


def load_model_spec(path: str | Path) -> ModelSpec:
    """Load and validate a model-spec file."""
    p = Path(path)
    if not p.is_file():
        raise ParseError(f"model spec file not found: {p}")
    return parse_model_spec(p.read_text(), name=p.stem)


def write_model_spec(spec: ModelSpec, path: str | Path) -> None:
    lines = [f"# model: {spec.name}", "[states]", " ".join(spec.states)]
    for section, table in (("zeta", spec.zeta), ("eta", spec.eta)):
        lines.append(f"[{section}]")
        lines += [f"{s} {table[s]}" for s in spec.states]
    lines.append("[pi]")
    lines += [f"{s} {spec.base_measure[s]!r}" for s in spec.states]
    lines.append("[rates]")
    for (a, b, c, d), r in sorted(spec.rates.items()):
        lines.append(f"{a} {b} -> {c} {d} : {r!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def builtin_model_path(name: str) -> Path:
    """Path of a packaged model file ('two_lane_tasep', 'two_species_exclusion')."""
    from importlib.resources import files

    p = files("biflux").joinpath("models", f"{name}.model")
    return Path(str(p))


# ---------------------------------------------------------------------------
# built-in models
# ---------------------------------------------------------------------------


def two_lane_tasep() -> ModelSpec:
    """Two independent TASEP lanes on the same ring.

    Local state "ab" holds the occupancies of lane 1 (= zeta) and lane 2
    (= eta); a particle in either lane hops one site to the right at rate 1
    when the target lane slot is empty.  Uniform base measure.  Macroscopic
    fluxes are u(1-u) and v(1-v), so the model is decoupled and serves as
    the closed-form baseline.
    """
    states = ("00", "01", "10", "11")
    rates: dict[RateKey, float] = {}
    for b1 in "01":
        for b2 in "01":
            rates[("1" + b1, "0" + b2, "0" + b1, "1" + b2)] = 1.0  # lane 1 hop
    for a1 in "01":
        for a2 in "01":
            rates[(a1 + "1", a2 + "0", a1 + "0", a2 + "1")] = 1.0  # lane 2 hop
    spec = ModelSpec(
        name="two_lane_tasep",
        states=states,
        zeta={s: int(s[0]) for s in states},
        eta={s: int(s[1]) for s in states},
        base_measure={s: 0.25 for s in states},
        rates=rates,
    )
    check_spec(spec)
    return spec


def two_species_support() -> list[RateKey]:
    """Jump support of the coupled two-species exclusion model.

    States: empty "0", right-mover "A" (counted by zeta), left-mover "B"
    (counted by eta).  A hops right past holes, B hops left past holes,
    and an AB pair exchanges.  Cyclic balance fixes the exchange rate at
    twice the hop rate, which couples the macroscopic fluxes.
    """
    return [
        ("A", "0", "0", "A"),
        ("0", "B", "B", "0"),
        ("A", "B", "B", "A"),
    ]


def two_species_exclusion() -> ModelSpec:
    """The coupled reference model, as produced by ``synthesize_rates``.

    Rates (1/2, 1/2, 1) on the two hops and the exchange; fluxes are
    Phi = u(1-u+v)/2 and Psi = -v(1+u-v)/2, whose Hessians carry nonzero
    cross terms.
    """
    states = ("0", "A", "B")
    spec = ModelSpec(
        name="two_species_exclusion",
        states=states,
        zeta={"0": 0, "A": 1, "B": 0},
        eta={"0": 0, "A": 0, "B": 1},
        base_measure={s: 1.0 / 3.0 for s in states},
        rates={
            ("A", "0", "0", "A"): 0.5,
            ("0", "B", "B", "0"): 0.5,
            ("A", "B", "B", "A"): 1.0,
        },
    )
    check_spec(spec)
    return spec


# ---------------------------------------------------------------------------
# condition (C): the cyclic balance function Q
# ---------------------------------------------------------------------------


def q_table(spec: ModelSpec) -> np.ndarray:
    """Q(w1, w2) for every ordered state pair, shape (K, K).

    Q(w1,w2) = sum over (w1',w2') of
        pi(w1')pi(w2')/(pi(w1)pi(w2)) * r(w1',w2'; w1,w2) - r(w1,w2; w1',w2').
    """
    K = spec.n_states
    pi = spec.pi_values()
    Q = np.zeros((K, K))
    for i1, i2, j1, j2, r in spec.rate_entries():
        Q[i1, i2] -= r
        Q[j1, j2] += pi[i1] * pi[i2] / (pi[j1] * pi[j2]) * r
    return Q


def compute_Q(spec: ModelSpec, w1: str, w2: str) -> float:
    """Q for one ordered pair of state labels."""
    i, j = spec.index(w1), spec.index(w2)
    return float(q_table(spec)[i, j])


def max_cyclic_residual(spec: ModelSpec) -> float:
    """max over state triples of |Q(w1,w2) + Q(w2,w3) + Q(w3,w1)|."""
    Q = q_table(spec)
    cyc = Q[:, :, None] + Q[None, :, :] + Q.T[:, None, :]
    return float(np.abs(cyc).max())


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

_BFS_MAX_SIZE = 8
_BFS_MAX_STATES = 10**7


def _check_condition_a(spec: ModelSpec) -> list[str]:
    violations = []
    for key, r in sorted(spec.rates.items()):
        if r <= 0:
            continue
        a, b, c, d = key
        if spec.zeta[a] + spec.zeta[b] != spec.zeta[c] + spec.zeta[d]:
            violations.append(f"rate entry {key} changes the zeta pair sum")
        if spec.eta[a] + spec.eta[b] != spec.eta[c] + spec.eta[d]:
            violations.append(f"rate entry {key} changes the eta pair sum")
    return violations


def _torus_digits(n: int, K: int) -> np.ndarray:
    """Digits of all K**n torus configurations, shape (K**n, n), int32."""
    size = K**n
    idx = np.arange(size, dtype=np.int64)
    digits = np.empty((size, n), dtype=np.int32)
    for j in range(n):
        digits[:, j] = (idx // K**j) % K
    return digits


def _check_condition_b(spec: ModelSpec, n: int) -> list[str]:
    """Strong-connectivity check of every (Z, N) sector of the size-n torus."""
    from scipy.sparse import coo_matrix

    K = spec.n_states
    size = K**n
    digits = _torus_digits(n, K)
    Z = spec.zeta_values()[digits].sum(axis=1)
    N = spec.eta_values()[digits].sum(axis=1)

    rows, cols = [], []
    for j in range(n):
        jn = (j + 1) % n
        for i1, i2, t1, t2, r in spec.rate_entries():
            if r <= 0:
                continue
            mask = (digits[:, j] == i1) & (digits[:, jn] == i2)
            src = np.nonzero(mask)[0]
            dst = src + (t1 - i1) * K**j + (t2 - i2) * K**jn
            rows.append(src)
            cols.append(dst)
    if rows:
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
    else:
        rows = np.empty(0, dtype=np.int64)
        cols = np.empty(0, dtype=np.int64)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(size, size))
    n_comp, labels = csgraph.connected_components(
        graph.tocsr(), directed=True, connection="strong"
    )

    violations = []
    sector_key = (Z - Z.min()) * (int(N.max() - N.min()) + 1) + (N - N.min())
    order = np.argsort(sector_key, kind="stable")
    sk = sector_key[order]
    boundaries = np.nonzero(np.diff(sk))[0] + 1
    for chunk in np.split(order, boundaries):
        comp = np.unique(labels[chunk])
        if len(comp) > 1:
            z, nn = int(Z[chunk[0]]), int(N[chunk[0]])
            violations.append(
                f"n={n}: sector (Z={z}, N={nn}) splits into {len(comp)} "
                f"components ({len(chunk)} configurations)"
            )
    return violations


def stationarity_residual(spec: ModelSpec, n: int) -> float:
    """Max-norm of the row vector pi^n L^n on the size-n torus."""
    from .exact import build_generator

    gen = build_generator(spec, n, boundary="periodic")
    digits = _torus_digits(n, spec.n_states)
    pi_n = np.prod(spec.pi_values()[digits], axis=1)
    return float(np.abs(pi_n @ gen.matrix).max())


def validate_model(
    spec: ModelSpec,
    torus_sizes: list[int] | tuple[int, ...] = (3, 4),
    *,
    cyclic_tolerance: float = CYCLIC_TOL,
) -> ValidationReport:
    """Exhaustive desk-scale verification of conditions (A)-(C).

    Raises SizeLimitError when a requested torus is too large for an
    exhaustive check (that is a configuration error, not a validation
    failure).
    """
    check_spec(spec)
    sizes = tuple(sorted(set(int(n) for n in torus_sizes)))
    if not sizes:
        raise SizeLimitError("torus_sizes must not be empty")
    K = spec.n_states
    for n in sizes:
        if not 3 <= n <= _BFS_MAX_SIZE:
            raise SizeLimitError(f"torus size {n} outside the exhaustive range [3, 8]")
        if K**n > _BFS_MAX_STATES:
            raise SizeLimitError(
                f"|Omega|^n = {K**n} exceeds the exhaustive cap {_BFS_MAX_STATES}"
            )

    violations = _check_condition_a(spec)
    a_ok = not violations

    b_violations: list[str] = []
    for n in sizes:
        b_violations += _check_condition_b(spec, n)
    b_ok = not b_violations
    violations += b_violations

    residual = max_cyclic_residual(spec)
    c_ok = residual <= cyclic_tolerance
    if not c_ok:
        violations.append(
            f"max cyclic Q residual {residual:.3e} exceeds {cyclic_tolerance:.1e}"
        )

    stat = stationarity_residual(spec, sizes[0])

    return ValidationReport(
        model_name=spec.name,
        condition_a_ok=a_ok,
        condition_b_ok=b_ok,
        tested_torus_sizes=sizes,
        condition_c_ok=c_ok,
        max_cyclic_residual=residual,
        cyclic_tolerance=cyclic_tolerance,
        stationarity_residual=stat,
        stationarity_torus_size=sizes[0],
        violations=violations,
    )


# ---------------------------------------------------------------------------
# rate synthesis
# ---------------------------------------------------------------------------


def synthesize_rates(
    states: tuple[str, ...] | list[str],
    zeta: dict[str, int],
    eta: dict[str, int],
    base_measure: dict[str, float],
    support: list[RateKey],
    objective: str = "max-min-rate",
) -> dict[RateKey, float]:
    """Find nonnegative rates on ``support`` with all cyclic Q sums zero.

    The constraints are homogeneous and linear in the rates, so this is an
    LP feasibility problem; the result is scaled to max rate 1.  With
    ``objective="max-min-rate"`` the smallest rate on the support is
    maximized subject to the same constraints (rates capped at 1 to fix
    the scale).  Raises InfeasibleSupportError when only the zero solution
    exists.
    """
    if objective not in ("none", "max-min-rate"):
        raise ValueError(f"unknown objective {objective!r}")
    support = list(dict.fromkeys(tuple(e) for e in support))
    if not support:
        raise InfeasibleSupportError("empty support admits only the zero model")

    states = tuple(states)
    pos = {s: k for k, s in enumerate(states)}
    K = len(states)
    pi = np.array([base_measure[s] for s in states])
    for e in support:
        if any(s not in pos for s in e):
            raise SpecInvariantError(f"support entry {e} uses unknown states")
        a, b, c, d = e
        if (a, b) == (c, d):
            raise SpecInvariantError(f"support entry {e} maps a pair to itself")
        if zeta[a] + zeta[b] != zeta[c] + zeta[d] or eta[a] + eta[b] != eta[c] + eta[d]:
            raise SpecInvariantError(f"support entry {e} violates pair conservation")

    # Q[i,j] = sum_e coef[e][i,j] * r_e; cyclic constraints are rows over triples.
    m = len(support)
    coef = np.zeros((K, K, m))
    for col, (a, b, c, d) in enumerate(support):
        i1, i2, j1, j2 = pos[a], pos[b], pos[c], pos[d]
        coef[i1, i2, col] -= 1.0
        coef[j1, j2, col] += pi[i1] * pi[i2] / (pi[j1] * pi[j2])

    rows = []
    for i in range(K):
        for j in range(K):
            for k in range(K):
                rows.append(coef[i, j] + coef[j, k] + coef[k, i])
    a_eq = np.unique(np.array(rows), axis=0)
    a_eq = a_eq[np.any(a_eq != 0.0, axis=1)]
    b_eq = np.zeros(len(a_eq))

    def _max_sum() -> np.ndarray | None:
        res = linprog(
            c=-np.ones(m),
            A_eq=a_eq if len(a_eq) else None,
            b_eq=b_eq if len(a_eq) else None,
            bounds=[(0.0, 1.0)] * m,
            method="highs",
        )
        if not res.success or res.x is None or res.x.max() < 1e-9:
            return None
        return res.x

    x = None
    if objective == "max-min-rate":
        # variables (r_1..r_m, t): maximize t subject to r_e >= t.
        c = np.zeros(m + 1)
        c[-1] = -1.0
        a_ub = np.hstack([-np.eye(m), np.ones((m, 1))])
        aeq = np.hstack([a_eq, np.zeros((len(a_eq), 1))]) if len(a_eq) else None
        res = linprog(
            c=c,
            A_ub=a_ub,
            b_ub=np.zeros(m),
            A_eq=aeq,
            b_eq=b_eq if len(a_eq) else None,
            bounds=[(0.0, 1.0)] * m + [(0.0, 1.0)],
            method="highs",
        )
        if res.success and res.x is not None and res.x[-1] > 1e-9:
            x = res.x[:m]
    if x is None:
        x = _max_sum()
    if x is None:
        raise InfeasibleSupportError(
            "support admits no nonzero rates with vanishing cyclic Q sums"
        )

    x = np.where(x < 1e-12, 0.0, x)
    x = x / x.max()
    return {e: float(v) for e, v in zip(support, x) if v > 0.0}


def synthesize_model(
    name: str,
    states: tuple[str, ...] | list[str],
    zeta: dict[str, int],
    eta: dict[str, int],
    base_measure: dict[str, float],
    support: list[RateKey],
    objective: str = "max-min-rate",
) -> ModelSpec:
    """Synthesize rates and wrap the result as a checked ModelSpec."""
    rates = synthesize_rates(states, zeta, eta, base_measure, support, objective)
    spec = ModelSpec(
        name=name,
        states=tuple(states),
        zeta=dict(zeta),
        eta=dict(eta),
        base_measure=dict(base_measure),
        rates=rates,
    )
    check_spec(spec)
    return spec
