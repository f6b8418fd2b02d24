"""Model definition: atomic levels, cavity modes, couplings and the
dipole-dipole interaction table.

A model holds n atomic levels (omega_1 = 0, strictly increasing), ell cavity
modes, mode-coupled transition dipoles mu_jk^(s), and a four-index table
g_jklm of dipole-dipole strengths.  The table must satisfy the exchange and
hermiticity symmetries

    g_jklm = g_lmjk,          g_jklm = conj(g_kjml),

and, when built from real dipole vectors, additionally

    g_jklm = g_jkml = g_kjlm.

Only transitions that carry a dipole (the model's allowed pairs) may appear in
the table or the mode couplings.  Named three-level configurations (Xi,
Lambda, V) and the four-level chain and diamond are provided with the
double-resonance convention Omega_s = omega_k - omega_j for the transition the
mode drives, and with couplings parameterised by the dimensionless strength
x_jk = mu_jk / mu_jk^c where mu_jk^c = sqrt(Omega_s (omega_k - omega_j)) / 2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .operator_algebra import OccupationBasis, pair_product


class ValidationError(ValueError):
    """A model file or model object violates a structural constraint."""


# ---------------------------------------------------------------------------
# dipole-dipole strength table


def _images(key: tuple[int, int, int, int], value: complex, real_dipoles: bool):
    """Symmetry images of one table entry."""
    j, k, l, m = key
    out = [((l, m, j, k), value), ((k, j, m, l), np.conj(value))]
    if real_dipoles:
        out += [((j, k, m, l), value), ((k, j, l, m), value)]
    return out


@dataclass(frozen=True)
class GTable:
    """Four-index dipole-dipole strength table over n levels (1-based).

    Entries not stored are zero.  ``complete()`` fills the symmetry orbit of
    every stored entry and raises on contradictions.
    """

    n: int
    entries: dict[tuple[int, int, int, int], complex] = field(default_factory=dict)
    real_dipoles: bool = True

    def __post_init__(self):
        for key, val in self.entries.items():
            if len(key) != 4 or not all(1 <= i <= self.n for i in key):
                raise ValidationError(f"table key {key} outside levels 1..{self.n}")
            j, k, l, m = key
            if j == k or l == m:
                raise ValidationError(f"table key {key} references a j == k pair")
            if self.real_dipoles and abs(np.imag(complex(val))) > 0:
                raise ValidationError(
                    f"entry {key} is complex but the table is marked real-dipole"
                )

    def get(self, j: int, k: int, l: int, m: int) -> complex:
        return self.entries.get((j, k, l, m), 0.0 + 0.0j)

    def complete(self, tol: float = 1e-12) -> "GTable":
        """Return the table with all symmetry images filled in."""
        full = {k: complex(v) for k, v in self.entries.items()}
        worklist = list(full)
        while worklist:
            key = worklist.pop()
            for nk, nv in _images(key, full[key], self.real_dipoles):
                if nk in full:
                    if abs(full[nk] - nv) > tol:
                        raise ValidationError(
                            f"symmetry conflict at {nk}: {full[nk]} vs {nv}"
                        )
                else:
                    full[nk] = nv
                    worklist.append(nk)
        return GTable(n=self.n, entries=full, real_dipoles=self.real_dipoles)

    def nonzero_keys(self) -> list[tuple[int, int, int, int]]:
        return sorted(k for k, v in self.entries.items() if v != 0)

    def pairs_referenced(self) -> set[tuple[int, int]]:
        out = set()
        for j, k, l, m in self.entries:
            out.add((min(j, k), max(j, k)))
            out.add((min(l, m), max(l, m)))
        return out


def g_from_dipoles(
    dipoles: dict[tuple[int, int], np.ndarray],
    rel_pos: np.ndarray,
    n: int | None = None,
) -> GTable:
    """Build a strength table from real transition dipole vectors.

    Parameters
    ----------
    dipoles : dict
        Map (j, k) with j < k to a real 3-vector d_jk.  Absent pairs carry no
        dipole and generate no table entries.
    rel_pos : array
        Relative position vector R between the two atoms (Gaussian units with
        4 pi eps_0 = 1); only its direction and length enter:

            g_jklm = (d_jk . d_lm - 3 (nhat . d_jk)(nhat . d_lm)) / R^3.

    Returns
    -------
    GTable
        Completed real-dipole table over ``n`` levels (inferred from the
        dipole keys when not given).
    """
    rel = np.asarray(rel_pos, dtype=float)
    dist = np.linalg.norm(rel)
    if dist <= 0:
        raise ValidationError("relative position must be nonzero")
    nhat = rel / dist
    pairs = {}
    for (j, k), d in dipoles.items():
        if j >= k:
            raise ValidationError(f"dipole key ({j}, {k}) must have j < k")
        d = np.asarray(d, dtype=float)
        if d.shape != (3,):
            raise ValidationError(f"dipole ({j}, {k}) must be a 3-vector")
        pairs[(j, k)] = d
    if n is None:
        n = max(max(j, k) for j, k in pairs) if pairs else 2
    entries = {}
    keys = sorted(pairs)
    for a, (j, k) in enumerate(keys):
        for l, m in keys[a:]:
            da, db = pairs[(j, k)], pairs[(l, m)]
            g = (da @ db - 3.0 * (nhat @ da) * (nhat @ db)) / dist**3
            if g != 0.0:
                entries[(j, k, l, m)] = g
    return GTable(n=n, entries=entries, real_dipoles=True).complete()


def validate_gtable(
    gtable: GTable,
    allowed_pairs: set[tuple[int, int]] | None = None,
    tol: float = 1e-12,
) -> GTable:
    """Check a table's symmetries and transition support; return it completed.

    Raises ValidationError when completion finds a symmetry conflict, when an
    entry references a transition without a dipole, or when the implied
    interaction is not hermitian.
    """
    full = gtable.complete(tol=tol)
    if allowed_pairs is not None:
        bad = full.pairs_referenced() - set(allowed_pairs)
        if bad:
            raise ValidationError(
                f"table references transitions without a dipole: {sorted(bad)}"
            )
    for (j, k, l, m), v in full.entries.items():
        w = full.entries.get((k, j, m, l))
        if w is None or abs(np.conj(w) - v) > tol:
            raise ValidationError(f"table not hermitian at {(j, k, l, m)}")
    return full


# ---------------------------------------------------------------------------
# model specification


@dataclass(frozen=True)
class Coupling:
    """One mode-driven transition: levels j < k, 1-based mode, real strength."""

    j: int
    k: int
    mode: int
    mu: float


@dataclass(frozen=True)
class ModelSpec:
    """Complete description of an n-level, ell-mode model."""

    n: int
    omegas: tuple[float, ...]
    mode_freqs: tuple[float, ...]
    couplings: tuple[Coupling, ...]
    allowed_pairs: frozenset[tuple[int, int]]
    gtable: GTable
    name: str = "custom"
    scan_pairs: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        n = self.n
        if n < 2:
            raise ValidationError("need at least two levels")
        if len(self.omegas) != n:
            raise ValidationError(f"omegas must have length {n}")
        if self.omegas[0] != 0.0:
            raise ValidationError("level 1 must sit at zero energy")
        if any(b <= a for a, b in zip(self.omegas, self.omegas[1:])):
            raise ValidationError("level energies must be strictly increasing")
        for j, k in self.allowed_pairs:
            if not (1 <= j < k <= n):
                raise ValidationError(f"allowed pair ({j}, {k}) invalid")
        for c in self.couplings:
            if not (1 <= c.j < c.k <= n):
                raise ValidationError(f"coupling levels ({c.j}, {c.k}) invalid")
            if not (1 <= c.mode <= len(self.mode_freqs)):
                raise ValidationError(f"coupling mode {c.mode} out of range")
            if isinstance(c.mu, complex) or not np.isreal(c.mu):
                raise ValidationError("complex coupling strengths are not supported")
            if (c.j, c.k) not in self.allowed_pairs:
                raise ValidationError(
                    f"coupling on ({c.j}, {c.k}) but that transition has no dipole"
                )
        if any(om <= 0 for om in self.mode_freqs):
            raise ValidationError("mode frequencies must be positive")
        if self.gtable.n != n:
            raise ValidationError("table level count differs from the model")
        validate_gtable(self.gtable, set(self.allowed_pairs))
        for p in self.scan_pairs:
            if p not in self.allowed_pairs:
                raise ValidationError(f"scan pair {p} has no dipole")

    @property
    def ell(self) -> int:
        return len(self.mode_freqs)

    def gap(self, j: int, k: int) -> float:
        return self.omegas[k - 1] - self.omegas[j - 1]

    def mu_critical(self, coupling: Coupling) -> float:
        """Normal-region critical strength sqrt(Omega_s omega_jk) / 2."""
        return 0.5 * math.sqrt(
            self.mode_freqs[coupling.mode - 1] * self.gap(coupling.j, coupling.k)
        )

    def x_values(self) -> tuple[float, ...]:
        """Dimensionless strengths mu / mu_c per coupling."""
        return tuple(c.mu / self.mu_critical(c) for c in self.couplings)

    def with_x(self, x: tuple[float, ...] | list[float]) -> "ModelSpec":
        """Copy of the model with couplings set to x_jk mu_jk^c."""
        if len(x) != len(self.couplings):
            raise ValidationError(
                f"expected {len(self.couplings)} strengths, got {len(x)}"
            )
        new = tuple(
            Coupling(c.j, c.k, c.mode, float(xi) * self.mu_critical(c))
            for c, xi in zip(self.couplings, x)
        )
        return ModelSpec(
            n=self.n,
            omegas=self.omegas,
            mode_freqs=self.mode_freqs,
            couplings=new,
            allowed_pairs=self.allowed_pairs,
            gtable=self.gtable,
            name=self.name,
            scan_pairs=self.scan_pairs,
        )


# ---------------------------------------------------------------------------
# dipole-dipole strength rows used by the scans (closed forms kept exact)

STRENGTH_ROWS = {
    1: (0.1, 0.04, 14.0 * math.sqrt(1e-5)),
    2: (0.3, 0.2, 14.0 * math.sqrt(1.5) * 1e-2),
    3: (1.0, 0.4, 140.0 * math.sqrt(1e-5)),
}


def parse_g_row(row: str) -> tuple[int, int]:
    """Parse a row label like 'g3', 'g+2', 'g-1', 'gm3' into (sign, index)."""
    label = row.strip().lower().replace(" ", "")
    if not label.startswith("g"):
        raise ValidationError(f"unknown strength row {row!r}")
    body = label[1:]
    sign = 1
    if body.startswith(("+", "p")):
        body = body[1:]
    elif body.startswith(("-", "m")):
        sign = -1
        body = body[1:]
    if body not in {"1", "2", "3"}:
        raise ValidationError(f"unknown strength row {row!r}")
    return sign, int(body)


def row_entries(
    row: str, jklm: tuple[int, int, int, int]
) -> dict[tuple[int, int, int, int], float]:
    """Generator entries for a named row on the configuration's two pairs."""
    sign, idx = parse_g_row(row)
    v1, v2, v3 = STRENGTH_ROWS[idx]
    j, k, l, m = jklm
    return {
        (j, k, j, k): sign * v1,
        (l, m, l, m): sign * v2,
        (j, k, l, m): sign * v3,
    }


# ---------------------------------------------------------------------------
# named configurations

# (pair list, default omegas); each pair is driven by its own resonant mode
_NAMED = {
    "two_level": (((1, 2),), (0.0, 1.0)),
    "xi": (((1, 2), (2, 3)), (0.0, 0.75, 1.0)),
    "lambda": (((1, 3), (2, 3)), (0.0, 0.25, 1.0)),
    "v": (((1, 2), (1, 3)), (0.0, 0.75, 1.0)),
    "lambda4": (((1, 3), (2, 3), (3, 4)), (0.0, 0.25, 0.5, 1.0)),
    "diamond4": (((1, 2), (1, 3), (2, 4), (3, 4)), (0.0, 0.4, 0.6, 1.0)),
}

_ALIASES = {
    "two-level": "two_level",
    "2level": "two_level",
    "xi": "xi",
    "lambda": "lambda",
    "lam": "lambda",
    "v": "v",
    "lambda4": "lambda4",
    "lam4": "lambda4",
    "diamond": "diamond4",
    "diamond4": "diamond4",
}

_CANONICAL_NAME = {
    "two_level": "two_level",
    "xi": "Xi",
    "lambda": "Lambda",
    "v": "V",
    "lambda4": "lambda4",
    "diamond4": "diamond4",
}

# Table row columns attach to (j, k, l, m) of the configuration's two pairs.
_JKLM = {"xi": (1, 2, 2, 3), "lambda": (1, 3, 2, 3), "v": (1, 2, 1, 3)}


def canonical_name(name: str) -> str:
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    if key not in _NAMED:
        raise ValidationError(f"unknown configuration {name!r}")
    return key


def named_configuration(
    name: str,
    *,
    omega2: float | None = None,
    omegas=None,
    g=None,
    x=None,
) -> ModelSpec:
    """Build one of the named configurations.

    Parameters
    ----------
    name : str
        One of two_level, Xi, Lambda, V, lambda4, diamond4 (case-insensitive).
    omega2 : float, optional
        Middle level energy for the three-level names; defaults are 3/4 (Xi),
        1/4 (Lambda), 3/4 (V).  Must lie strictly between 0 and 1.
    omegas : sequence, optional
        Full level ladder; overrides omega2 and the defaults.
    g : str | dict | float, optional
        Strength row label ('g1'..'g3', 'g-1'..'g-3'), an explicit generator
        dict {(j,k,l,m): value}, the scalar total pair strength for
        two_level, or None for no dipole-dipole interaction.
    x : float | sequence, optional
        Dimensionless strengths, one per coupled transition (a scalar for
        two_level).  Defaults to zero.
    """
    key = canonical_name(name)
    pairs, default_omegas = _NAMED[key]
    if omegas is not None:
        omegas = tuple(float(v) for v in omegas)
        if len(omegas) != len(default_omegas):
            raise ValidationError(
                f"{name} needs {len(default_omegas)} level energies"
            )
    elif omega2 is not None:
        if len(default_omegas) != 3:
            raise ValidationError("omega2 only applies to three-level names")
        if not (0.0 < omega2 < 1.0):
            raise ValidationError("omega2 must lie strictly inside (0, 1)")
        omegas = (0.0, float(omega2), 1.0)
    else:
        omegas = default_omegas

    if x is None:
        xs = (0.0,) * len(pairs)
    elif np.isscalar(x):
        xs = (float(x),) * (1 if key == "two_level" else len(pairs))
        if key != "two_level" and len(pairs) > 1 and not np.isscalar(x):
            raise ValidationError("x must match the number of transitions")
    else:
        xs = tuple(float(v) for v in x)
    if len(xs) != len(pairs):
        raise ValidationError(f"{name} needs {len(pairs)} strength values")

    if g is None:
        entries = {}
    elif isinstance(g, str):
        if key not in _JKLM:
            raise ValidationError("strength rows apply to the three-level names")
        entries = row_entries(g, _JKLM[key])
    elif isinstance(g, dict):
        entries = {tuple(k): v for k, v in g.items()}
    elif np.isscalar(g) and key == "two_level":
        # scalar total strength g = g_jkkj + g_jkjk split evenly
        entries = {(1, 2, 1, 2): float(g) / 2.0, (1, 2, 2, 1): float(g) / 2.0}
    else:
        raise ValidationError("g must be a row label, a generator dict, or None")
    for v in entries.values():
        if abs(np.imag(complex(v))) > 0:
            raise ValidationError(
                "named configurations take real dipole strengths only"
            )

    gtable = GTable(
        n=len(omegas), entries={k: complex(v) for k, v in entries.items()}
    ).complete()
    mode_freqs = tuple(omegas[k - 1] - omegas[j - 1] for j, k in pairs)
    couplings = []
    for idx, ((j, k), xv) in enumerate(zip(pairs, xs), start=1):
        mu_c = 0.5 * math.sqrt(mode_freqs[idx - 1] * (omegas[k - 1] - omegas[j - 1]))
        couplings.append(Coupling(j=j, k=k, mode=idx, mu=xv * mu_c))
    return ModelSpec(
        n=len(omegas),
        omegas=omegas,
        mode_freqs=mode_freqs,
        couplings=tuple(couplings),
        allowed_pairs=frozenset(pairs),
        gtable=gtable,
        name=_CANONICAL_NAME[key],
        scan_pairs=pairs[:2] if key != "two_level" else pairs,
    )


# ---------------------------------------------------------------------------
# dipole-dipole Hamiltonian on the symmetric sector


def assemble_hdd(gtable: GTable, basis: OccupationBasis):
    """Dipole-dipole Hamiltonian (1 / (2 (N_a - 1))) sum g_jklm A_jk (x) A_lm.

    The two-body products carry no self-interaction, so a single atom feels
    nothing and the assembled matrix is zero for n_atoms = 1.
    """
    full = gtable.complete()
    if basis.n != gtable.n:
        raise ValidationError("basis and table level counts differ")
    na = basis.n_atoms
    shape = (basis.dim, basis.dim)
    iscomplex = any(abs(np.imag(v)) > 0 for v in full.entries.values())
    dtype = complex if iscomplex else float
    out = np.zeros(shape, dtype=dtype) if basis.dim <= 64 else None
    if na == 1:
        return out if out is not None else np.zeros(shape)
    pref = 1.0 / (2.0 * (na - 1))
    acc = out
    for (j, k, l, m), v in sorted(full.entries.items()):
        if v == 0:
            continue
        coef = (v if iscomplex else np.real(v)) * pref
        term = coef * pair_product(basis, j, k, l, m)
        acc = term if acc is None else acc + term
    if acc is None:
        acc = np.zeros(shape)
    return acc


# ---------------------------------------------------------------------------
# model files


def _require_keys(obj: dict, required: set[str], optional: set[str], where: str):
    keys = set(obj)
    missing = required - keys
    unknown = keys - required - optional
    if missing:
        raise ValidationError(f"{where}: missing keys {sorted(missing)}")
    if unknown:
        raise ValidationError(f"{where}: unknown keys {sorted(unknown)}")


def _g_to_json(v: complex):
    return float(np.real(v)) if np.imag(v) == 0 else [float(np.real(v)), float(np.imag(v))]


def _g_from_json(v) -> complex:
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, list) and len(v) == 2:
        return complex(v[0], v[1])
    raise ValidationError(f"bad table value {v!r}; use a number or [re, im]")


def model_to_dict(spec: ModelSpec) -> dict:
    return {
        "config": {
            "name": spec.name,
            "scan_pairs": [list(p) for p in spec.scan_pairs],
        },
        "atoms": {
            "n": spec.n,
            "omegas": list(spec.omegas),
            "transitions": [list(p) for p in sorted(spec.allowed_pairs)],
        },
        "modes": [{"Omega": om} for om in spec.mode_freqs],
        "couplings": [
            {"j": c.j, "k": c.k, "mode": c.mode, "mu": c.mu} for c in spec.couplings
        ],
        "gtable": {
            "real_dipoles": spec.gtable.real_dipoles,
            "entries": [
                {"j": j, "k": k, "l": l, "m": m, "g": _g_to_json(v)}
                for (j, k, l, m), v in sorted(
                    spec.gtable.entries.items(), key=lambda kv: kv[0]
                )
                if v != 0
            ],
        },
    }


def model_from_dict(data: dict) -> ModelSpec:
    """Strict parser for the JSON model format; unknown keys are rejected."""
    if not isinstance(data, dict):
        raise ValidationError("model file must hold a JSON object")
    _require_keys(
        data, {"atoms", "modes", "couplings", "gtable"}, {"config"}, "model"
    )
    config = data.get("config", {})
    _require_keys(config, set(), {"name", "scan_pairs"}, "config")
    atoms = data["atoms"]
    _require_keys(atoms, {"n", "omegas"}, {"transitions"}, "atoms")
    n = int(atoms["n"])
    omegas = tuple(float(v) for v in atoms["omegas"])
    if "transitions" in atoms:
        allowed = frozenset((int(j), int(k)) for j, k in atoms["transitions"])
    else:
        allowed = frozenset(
            (j, k) for j in range(1, n + 1) for k in range(j + 1, n + 1)
        )
    mode_freqs = []
    for i, mode in enumerate(data["modes"]):
        _require_keys(mode, {"Omega"}, set(), f"modes[{i}]")
        mode_freqs.append(float(mode["Omega"]))
    couplings = []
    for i, c in enumerate(data["couplings"]):
        _require_keys(c, {"j", "k", "mode", "mu"}, set(), f"couplings[{i}]")
        if isinstance(c["mu"], list):
            raise ValidationError("complex coupling strengths are not supported")
        couplings.append(
            Coupling(j=int(c["j"]), k=int(c["k"]), mode=int(c["mode"]), mu=float(c["mu"]))
        )
    gt = data["gtable"]
    _require_keys(gt, {"entries"}, {"real_dipoles"}, "gtable")
    entries = {}
    for i, e in enumerate(gt["entries"]):
        _require_keys(e, {"j", "k", "l", "m", "g"}, set(), f"gtable.entries[{i}]")
        entries[(int(e["j"]), int(e["k"]), int(e["l"]), int(e["m"]))] = _g_from_json(
            e["g"]
        )
    gtable = GTable(
        n=n, entries=entries, real_dipoles=bool(gt.get("real_dipoles", True))
    ).complete()
    return ModelSpec(
        n=n,
        omegas=omegas,
        mode_freqs=tuple(mode_freqs),
        couplings=tuple(couplings),
        allowed_pairs=allowed,
        gtable=gtable,
        name=str(config.get("name", "custom")),
        scan_pairs=tuple(tuple(p) for p in config.get("scan_pairs", [])),
    )


def save_model(spec: ModelSpec, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(spec), indent=2) + "\n")


def load_model(path) -> ModelSpec:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"bad JSON in {path}: {exc}") from exc
    return model_from_dict(data)
