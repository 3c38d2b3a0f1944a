"""Builders for modular non-Hermitian 1D tight-binding lattices.

A lattice consists of ``L`` modules, each holding ``r`` sites of ``d``
sublevels, so the Hilbert-space dimension is ``D = d*r*L`` and the site
count is ``N = r*L``.  Couplings: a real Hermitian sublevel hopping
``J0``, non-reciprocal intra-module hoppings ``JL`` (leftward) / ``JR``
(rightward), and non-reciprocal inter-module hoppings ``Jm`` (leftward) /
``JmP`` (rightward).

Basis ordering is lexicographic in (module n, site mu, sublevel nu); the
flat index of ``(n, mu, nu)`` with 1-based labels is
``((n-1)*r + (mu-1))*d + (nu-1)``.  Matrices follow the convention
``H[a, b] = <a|H|b>``.  All builders are pure functions.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionCapError, UnsupportedStructureError, ValidationError

OBC = "OBC"
PBC = "PBC"

RECIPROCAL_MODULAR = "RECIPROCAL_MODULAR"
SHIFTED = "SHIFTED"
NON_MODULAR = "NON_MODULAR"

PRESET_KINDS = (RECIPROCAL_MODULAR, SHIFTED, NON_MODULAR)

DEFAULT_DIM_CAP = 20000


@dataclass(frozen=True)
class CouplingPreset:
    """Rule tying the inter-module couplings to a single parameter J.

    RECIPROCAL_MODULAR: Jm = J, JmP = 1/J (requires J != 0).
    SHIFTED:            Jm = JL + J, JmP = JR + J.
    NON_MODULAR:        Jm = JL, JmP = JR (J unused).
    """

    kind: str
    J: complex = 0j

    def __post_init__(self):
        if self.kind not in PRESET_KINDS:
            raise ValidationError("unknown preset kind: %r" % (self.kind,))
        if self.kind == RECIPROCAL_MODULAR and self.J == 0:
            raise ValidationError("RECIPROCAL_MODULAR preset requires J != 0")

    def modular_couplings(self, JL, JR):
        """Return (Jm, JmP) materialized from the intra-module couplings."""
        if self.kind == RECIPROCAL_MODULAR:
            return complex(self.J), 1.0 / complex(self.J)
        if self.kind == SHIFTED:
            return complex(JL) + complex(self.J), complex(JR) + complex(self.J)
        return complex(JL), complex(JR)


@dataclass(frozen=True)
class ModelParams:
    """Full specification of the modular lattice.

    Attributes
    ----------
    d, r, L : int
        Sublevels per site, sites per module, number of modules.
    J0 : float
        Hermitian hopping between adjacent sublevels (real by contract).
    JL, JR : complex
        Intra-module left / right hopping.
    Jm, JmP : complex
        Inter-module left / right hopping.
    boundary : str
        "OBC" or "PBC".
    preset : CouplingPreset or None
        When set, records the rule (Jm, JmP) were derived from; parameter
        updates through ``with_updates`` re-apply it.
    """

    d: int
    r: int
    L: int
    J0: float = 0.0
    JL: complex = 0j
    JR: complex = 0j
    Jm: complex = 0j
    JmP: complex = 0j
    boundary: str = OBC
    preset: CouplingPreset | None = None

    def __post_init__(self):
        for name in ("d", "r", "L"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                raise ValidationError("%s must be an integer, got %r" % (name, v))
        if self.d < 1 or self.r < 1:
            raise ValidationError("d and r must be >= 1")
        if self.L < 2:
            raise ValidationError("L must be >= 2")
        if self.r * self.d < 2:
            raise ValidationError("need r*d >= 2 internal states per module")
        if self.r == 1 and self.d == 1:
            raise ValidationError("r = 1 with d = 1 has no intra-module structure")
        if isinstance(self.J0, complex) or np.iscomplexobj(self.J0):
            raise ValidationError("J0 must be real")
        if self.d >= 2 and self.J0 == 0:
            raise ValidationError("J0 must be nonzero for d >= 2")
        if self.boundary not in (OBC, PBC):
            raise ValidationError("boundary must be OBC or PBC")
        for name in ("J0", "JL", "JR", "Jm", "JmP"):
            if not np.all(np.isfinite([complex(getattr(self, name))])):
                raise ValidationError("%s must be finite" % name)

    @property
    def D(self):
        """Hilbert-space dimension d*r*L."""
        return self.d * self.r * self.L

    @property
    def N(self):
        """Site count r*L."""
        return self.r * self.L

    def index(self, n, mu, nu):
        """Flat basis index of |n, mu, nu> (1-based labels)."""
        return ((n - 1) * self.r + (mu - 1)) * self.d + (nu - 1)

    def with_updates(self, **changes):
        """Return a copy with changed fields, re-applying the preset.

        When a preset is attached and neither Jm nor JmP is given
        explicitly, the modular couplings are re-derived from the updated
        (JL, JR, J).  Passing ``J=...`` updates the preset parameter.
        """
        preset = changes.pop("preset", self.preset)
        if "J" in changes:
            if preset is None:
                raise ValidationError("J update requires a coupling preset")
            preset = replace(preset, J=complex(changes.pop("J")))
        for key in ("JL", "JR", "Jm", "JmP"):
            if key in changes:
                changes[key] = complex(changes[key])
        if "J0" in changes:
            changes["J0"] = float(changes["J0"])
        explicit_mod = "Jm" in changes or "JmP" in changes
        p = replace(self, preset=preset, **changes)
        if preset is not None and not explicit_mod:
            Jm, JmP = preset.modular_couplings(p.JL, p.JR)
            p = replace(p, Jm=Jm, JmP=JmP)
        return p


def make_params(d, r, L, J0=0.0, JL=0j, JR=0j, Jm=None, JmP=None,
                boundary=OBC, preset=None):
    """Construct ModelParams, deriving (Jm, JmP) from ``preset`` if given."""
    if preset is not None:
        if Jm is not None or JmP is not None:
            raise ValidationError("give either a preset or explicit Jm/JmP, not both")
        Jm, JmP = preset.modular_couplings(JL, JR)
    if isinstance(J0, complex):
        raise ValidationError("J0 must be real")
    return ModelParams(d=d, r=r, L=L, J0=float(J0), JL=complex(JL),
                       JR=complex(JR), Jm=complex(Jm if Jm is not None else 0),
                       JmP=complex(JmP if JmP is not None else 0),
                       boundary=boundary, preset=preset)


def _hop_list(p):
    """All directed hops as (row, col, amplitude) triples.

    Covers the J0 sublevel pairs, the intra-module JL/JR pairs and the
    inter-module Jm/JmP pairs; for PBC the module index wraps L+1 -> 1.
    """
    d, r, L = p.d, p.r, p.L
    idx = p.index
    hops = []
    for n in range(1, L + 1):
        for mu in range(1, r + 1):
            for nu in range(1, d):
                a, b = idx(n, mu, nu), idx(n, mu, nu + 1)
                hops.append((a, b, complex(p.J0)))
                hops.append((b, a, complex(p.J0)))
        for mu in range(1, r):
            a, b = idx(n, mu, d), idx(n, mu + 1, 1)
            hops.append((a, b, p.JL))
            hops.append((b, a, p.JR))
    last = L if p.boundary == PBC else L - 1
    for n in range(1, last + 1):
        n2 = n % L + 1
        a, b = idx(n, r, d), idx(n2, 1, 1)
        hops.append((a, b, p.Jm))
        hops.append((b, a, p.JmP))
    return hops


def build_hamiltonian(p, dim_cap=DEFAULT_DIM_CAP):
    """Real-space Hamiltonian of the full chain.

    Parameters
    ----------
    p : ModelParams
    dim_cap : int
        Refuse to build matrices larger than this (dense eigensolve cost).

    Returns
    -------
    ndarray of shape (D, D), complex
    """
    if p.D > dim_cap:
        raise DimensionCapError(
            "dimension D=%d exceeds cap %d" % (p.D, dim_cap))
    H = np.zeros((p.D, p.D), dtype=complex)
    for a, b, amp in _hop_list(p):
        H[a, b] += amp
    return H


def build_bloch(p, k):
    """Bloch Hamiltonian: the single-module block with corner entries
    JmP*exp(-ik) (top-right) and Jm*exp(+ik) (bottom-left).

    Parameters
    ----------
    p : ModelParams
    k : float
        Bloch phase in [0, 2*pi).

    Returns
    -------
    ndarray of shape (r*d, r*d), complex
    """
    return build_generalized_bloch(p, np.exp(1j * float(k)))


def build_generalized_bloch(p, beta):
    """Generalized Bloch Hamiltonian: build_bloch with exp(ik) -> beta.

    Parameters
    ----------
    p : ModelParams
    beta : complex
        Non-Bloch factor; must be nonzero.

    Returns
    -------
    ndarray of shape (r*d, r*d), complex
    """
    beta = complex(beta)
    if beta == 0:
        raise ValidationError("beta must be nonzero")
    m = p.r * p.d
    H = np.zeros((m, m), dtype=complex)
    idx = p.index
    for mu in range(1, p.r + 1):
        for nu in range(1, p.d):
            a, b = idx(1, mu, nu), idx(1, mu, nu + 1)
            H[a, b] += p.J0
            H[b, a] += p.J0
    for mu in range(1, p.r):
        a, b = idx(1, mu, p.d), idx(1, mu + 1, 1)
        H[a, b] += p.JL
        H[b, a] += p.JR
    H[0, m - 1] += p.JmP / beta
    H[m - 1, 0] += p.Jm * beta
    return H


def _bipartite_signs(p):
    """Sublattice sign of each position in the module chain, or None.

    The rd internal states form a nearest-neighbour chain closed by the
    inter-module bond; alternating labels work iff rd is even.
    """
    m = p.r * p.d
    if m % 2 != 0:
        return None
    return np.array([1 if i % 2 == 0 else -1 for i in range(m)])


def chiral_blocks(p, beta):
    """Off-diagonal blocks of the sublattice-sorted generalized Bloch matrix.

    Sorting even chain positions before odd ones brings H_beta to
    [[0, hPlus], [hMinus, 0]]; the permuted matrix anticommutes with
    S = diag(+1,...,+1,-1,...,-1).

    Returns
    -------
    (hPlus, hMinus) : pair of ndarrays, each (r*d/2, r*d/2)

    Raises
    ------
    UnsupportedStructureError
        If r*d is odd (no alternating sublattice labeling exists).
    """
    signs = _bipartite_signs(p)
    if signs is None:
        raise UnsupportedStructureError(
            "model with r*d = %d is not bipartite; winding undefined" % (p.r * p.d))
    H = build_generalized_bloch(p, beta)
    m = H.shape[0]
    perm = np.concatenate([np.arange(0, m, 2), np.arange(1, m, 2)])
    Ht = H[np.ix_(perm, perm)]
    h = m // 2
    if np.max(np.abs(Ht[:h, :h])) > 0 or np.max(np.abs(Ht[h:, h:])) > 0:
        raise UnsupportedStructureError("diagonal blocks nonzero; model not chiral")
    return Ht[:h, h:].copy(), Ht[h:, :h].copy()


def chiral_permutation(p):
    """Permutation array sorting even chain positions first (see chiral_blocks)."""
    m = p.r * p.d
    return np.concatenate([np.arange(0, m, 2), np.arange(1, m, 2)])


def build_current_operator(p):
    """Total particle current operator i*(T - T^dagger).

    T is the sum of every rightward hop with unit amplitude (sublevel,
    intra-module, and inter-module bonds alike), so the operator is
    Hermitian and shares the hop support of the Hamiltonian.

    Returns
    -------
    ndarray of shape (D, D), complex Hermitian
    """
    idx = p.index
    T = np.zeros((p.D, p.D), dtype=complex)
    for n in range(1, p.L + 1):
        for mu in range(1, p.r + 1):
            for nu in range(1, p.d):
                T[idx(n, mu, nu), idx(n, mu, nu + 1)] += 1.0
        for mu in range(1, p.r):
            T[idx(n, mu, p.d), idx(n, mu + 1, 1)] += 1.0
    last = p.L if p.boundary == PBC else p.L - 1
    for n in range(1, last + 1):
        T[idx(n, p.r, p.d), idx(n % p.L + 1, 1, 1)] += 1.0
    return 1j * (T - T.conj().T)


# -- serialization ----------------------------------------------------------

CONFIG_KEYS = ("d", "r", "L", "J0", "JL_re", "JL_im", "JR_re", "JR_im",
               "Jm_re", "Jm_im", "JmP_re", "JmP_im", "boundary", "preset",
               "J_re", "J_im")


def params_to_config(p):
    """Serialize ModelParams to a flat dict of primitive values."""
    cfg = {
        "d": p.d, "r": p.r, "L": p.L, "J0": p.J0,
        "JL_re": p.JL.real, "JL_im": p.JL.imag,
        "JR_re": p.JR.real, "JR_im": p.JR.imag,
        "Jm_re": p.Jm.real, "Jm_im": p.Jm.imag,
        "JmP_re": p.JmP.real, "JmP_im": p.JmP.imag,
        "boundary": p.boundary,
        "preset": p.preset.kind if p.preset else "NONE",
        "J_re": p.preset.J.real if p.preset else 0.0,
        "J_im": p.preset.J.imag if p.preset else 0.0,
    }
    return cfg


def params_from_config(cfg):
    """Parse ModelParams from a flat mapping (inverse of params_to_config).

    Unknown keys are rejected.  If a preset is named, (Jm, JmP) are derived
    from it; explicitly given values must then agree.
    """
    unknown = set(cfg) - set(CONFIG_KEYS)
    if unknown:
        raise ValidationError("unknown config keys: %s" % ", ".join(sorted(unknown)))
    for key in ("d", "r", "L"):
        if key not in cfg:
            raise ValidationError("missing config key: %s" % key)

    def _int(key):
        try:
            v = float(cfg[key])
        except (TypeError, ValueError):
            raise ValidationError("config key %s is not a number: %r" % (key, cfg[key]))
        if v != int(v):
            raise ValidationError("config key %s must be an integer" % key)
        return int(v)

    def _float(key, default=0.0):
        if key not in cfg:
            return default
        try:
            v = float(cfg[key])
        except (TypeError, ValueError):
            raise ValidationError("config key %s is not a number: %r" % (key, cfg[key]))
        if not np.isfinite(v):
            raise ValidationError("config key %s must be finite" % key)
        return v

    preset_name = str(cfg.get("preset", "NONE")).strip()
    preset = None
    if preset_name not in ("NONE", ""):
        preset = CouplingPreset(kind=preset_name,
                                J=complex(_float("J_re"), _float("J_im")))
    JL = complex(_float("JL_re"), _float("JL_im"))
    JR = complex(_float("JR_re"), _float("JR_im"))
    Jm_given = "Jm_re" in cfg or "Jm_im" in cfg
    Jm = complex(_float("Jm_re"), _float("Jm_im"))
    JmP = complex(_float("JmP_re"), _float("JmP_im"))
    boundary = str(cfg.get("boundary", OBC)).strip()
    if preset is not None:
        dJm, dJmP = preset.modular_couplings(JL, JR)
        if Jm_given and (abs(Jm - dJm) > 1e-12 or abs(JmP - dJmP) > 1e-12):
            raise ValidationError("explicit Jm/JmP inconsistent with preset %s"
                                  % preset.kind)
        Jm, JmP = dJm, dJmP
    return ModelParams(d=_int("d"), r=_int("r"), L=_int("L"), J0=_float("J0"),
                       JL=JL, JR=JR, Jm=Jm, JmP=JmP, boundary=boundary,
                       preset=preset)
