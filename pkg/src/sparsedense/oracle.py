"""Exact brute-force probability engine for small discrete image distributions.

Everything here enumerates finite supports, so the checks are exact up to
floating-point roundoff: conditional expectations, distributional invariance
under translations, the equivariance identity for the optimal restorer, the
closed-form minimizer of the locally supervised loss over translation
equivariant functions, and the SSDU recovery identity for random masks.

Observations are matched bitwise, so atoms should use exactly representable
values (0, 0.5, 1, 2, ...). Images are canonicalized to float64.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .sampling import (
    Shift,
    TranslationFamily,
    apply_mask,
    apply_shift,
    check_partition,
    shift_compose,
    shift_inverse,
)

ENUMERATION_CAP = 10**6
PROB_TOL = 1e-12


class EnumerationCapError(RuntimeError):
    """Joint support would exceed the enumeration cap; we never sample silently."""


class ConditionError(ValueError):
    """A named hypothesis (B1..B5 style condition) fails for the given inputs."""

    def __init__(self, condition, message):
        super().__init__(f"condition {condition} fails: {message}")
        self.condition = condition


def _key(arr) -> bytes:
    return np.ascontiguousarray(arr, dtype=np.float64).tobytes()


@dataclass(frozen=True)
class DiscreteDistribution:
    """Exact law of a random image: finite list of (image, probability) atoms.

    Duplicate images are merged on construction, probabilities must be
    positive and sum to one within 1e-12.
    """

    n: int
    atoms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        merged = {}
        order = []
        for img, p in self.atoms:
            img = np.asarray(img, dtype=np.float64)
            if img.shape != (self.n, self.n):
                raise ValueError(f"atom shape {img.shape} differs from ({self.n}, {self.n})")
            if not p > 0:
                raise ValueError("atom probabilities must be strictly positive")
            k = _key(img)
            if k in merged:
                merged[k] = (merged[k][0], merged[k][1] + p)
            else:
                merged[k] = (img, p)
                order.append(k)
        total = sum(merged[k][1] for k in order)
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {total}, expected 1 within {PROB_TOL}")
        object.__setattr__(self, "atoms", tuple(merged[k] for k in order))

    def mean_image(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        for img, p in self.atoms:
            out += p * img
        return out

    def observation_probs(self, m) -> dict:
        """Probability mass of each distinct masked observation, keyed by bytes."""
        probs = {}
        for img, p in self.atoms:
            k = _key(apply_mask(img, m))
            probs[k] = probs.get(k, 0.0) + p
        return probs


@dataclass(frozen=True)
class MaskDistribution:
    """Finite law of a random pixel mask."""

    n: int
    atoms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        cleaned = []
        for m, p in self.atoms:
            m = np.asarray(m, dtype=np.uint8)
            if m.shape != (self.n, self.n):
                raise ValueError(f"mask shape {m.shape} differs from ({self.n}, {self.n})")
            if not p > 0:
                raise ValueError("mask probabilities must be strictly positive")
            cleaned.append((m, p))
        total = sum(p for _, p in cleaned)
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {total}, expected 1 within {PROB_TOL}")
        object.__setattr__(self, "atoms", tuple(cleaned))

    def mean_mask(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        for m, p in self.atoms:
            out += p * m
        return out


def bernoulli_mask_distribution(n, q) -> MaskDistribution:
    """I.i.d. Bernoulli(q) mask over all 2^(n*n) patterns, exact probabilities."""
    cells = n * n
    if 2**cells > ENUMERATION_CAP:
        raise EnumerationCapError(f"2^{cells} mask atoms exceed cap {ENUMERATION_CAP}")
    atoms = []
    for bits in itertools.product((0, 1), repeat=cells):
        m = np.array(bits, dtype=np.uint8).reshape(n, n)
        k = int(sum(bits))
        atoms.append((m, (q**k) * ((1 - q) ** (cells - k))))
    return MaskDistribution(n, tuple(atoms))


def conditional_expectation(d: DiscreteDistribution, m, y) -> np.ndarray:
    """E[X | M (.) X = y] by direct enumeration over the atoms.

    The observation must be exactly realizable; otherwise the posterior is
    empty and we refuse rather than invent a value.
    """
    y = np.asarray(y, dtype=np.float64)
    num = np.zeros((d.n, d.n))
    den = 0.0
    for img, p in d.atoms:
        if np.array_equal(apply_mask(img, m), y):
            num += p * img
            den += p
    if den <= 0.0:
        raise ValueError("observation has zero probability")
    return num / den


def check_distribution_invariance(d: DiscreteDistribution, s: Shift) -> bool:
    """True iff the pushforward of d under the shift equals d as a weighted set."""
    orig = {_key(img): p for img, p in d.atoms}
    shifted = {}
    for img, p in d.atoms:
        k = _key(apply_shift(img, s))
        shifted[k] = shifted.get(k, 0.0) + p
    if set(orig) != set(shifted):
        return False
    return all(abs(orig[k] - shifted[k]) <= PROB_TOL for k in orig)


def check_masked_invariance(d: DiscreteDistribution, m, s: Shift) -> bool:
    """True iff the masked random image M (.) X is itself invariant under the shift.

    Presumes X invariant (raises otherwise, since the definition does).
    """
    if not check_distribution_invariance(d, s):
        raise ValueError("distribution is not invariant under the shift; "
                         "masked invariance is defined only for invariant X")
    orig = d.observation_probs(m)
    shifted = {}
    for img, p in d.atoms:
        k = _key(apply_shift(apply_mask(img, m), s))
        shifted[k] = shifted.get(k, 0.0) + p
    if set(orig) != set(shifted):
        return False
    return all(abs(orig[k] - shifted[k]) <= PROB_TOL for k in orig)


@dataclass
class LemmaReport:
    """Outcome of the shift-equivariance check for the optimal restorer."""

    holds: bool
    max_abs_error: float
    num_observations: int
    precondition_failures: list
    witness: np.ndarray | None = None

    def __str__(self):
        status = "holds" if self.holds else "FAILS"
        pre = "; preconditions violated: " + ", ".join(self.precondition_failures) \
            if self.precondition_failures else ""
        return (f"lemma equivariance {status} "
                f"(max |T(E[X|y]) - E[X|T(y)]| = {self.max_abs_error:.3e} "
                f"over {self.num_observations} observations{pre})")


def verify_lemma_invariance(d: DiscreteDistribution, m, s: Shift,
                            tol: float = 1e-12) -> LemmaReport:
    """Compare T(E[X | Y=y]) against E[X | Y=T(y)] for every supported y.

    Precondition failures (distribution or masked-distribution not invariant)
    are recorded in the report, and the comparison still runs so that a broken
    case produces a concrete witness observation. An unsupported shifted
    observation counts as an infinite-error witness.
    """
    failures = []
    if not check_distribution_invariance(d, s):
        failures.append("distribution not shift-invariant")
    elif not check_masked_invariance(d, m, s):
        failures.append("masked distribution not shift-invariant")

    observations = {}
    for img, _ in d.atoms:
        y = apply_mask(img, m)
        observations.setdefault(_key(y), y)

    max_err = 0.0
    witness = None
    for y in observations.values():
        lhs = apply_shift(conditional_expectation(d, m, y), s)
        try:
            rhs = conditional_expectation(d, m, apply_shift(y, s))
        except ValueError:
            max_err = float("inf")
            witness = y
            break
        err = float(np.max(np.abs(lhs - rhs)))
        if err > max_err:
            max_err = err
            if err > tol:
                witness = y
    return LemmaReport(holds=(max_err <= tol and not failures),
                       max_abs_error=max_err,
                       num_observations=len(observations),
                       precondition_failures=failures,
                       witness=witness)


def group_closure(family: TranslationFamily) -> list:
    """All shifts generated by the family under composition (a finite group)."""
    seen = set(family.shifts)
    frontier = list(family.shifts)
    while frontier:
        s = frontier.pop()
        for t in family.shifts:
            c = shift_compose(s, t, family.n)
            if c not in seen:
                seen.add(c)
                frontier.append(c)
        inv = shift_inverse(s, family.n)
        if inv not in seen:
            seen.add(inv)
            frontier.append(inv)
    return sorted(seen)


@dataclass
class EquivariantTable:
    """A translation-equivariant function stored on orbit representatives.

    Keys are the lexicographically smallest serialized image of each orbit of
    observed values under the group generated by the family; the value at any
    other orbit element follows from equivariance.
    """

    family: TranslationFamily
    entries: dict = field(default_factory=dict)
    group: list = field(default_factory=list)

    def canonical(self, y):
        """(representative key, shift g with apply_shift(rep, g) == y)."""
        best_key = None
        best_img = None
        best_shift = None
        for g in self.group:
            cand = apply_shift(y, shift_inverse(g, self.family.n))
            k = _key(cand)
            if best_key is None or k < best_key:
                best_key, best_img, best_shift = k, cand, g
        return best_key, best_img, best_shift

    def apply(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        key, _, g = self.canonical(y)
        if key not in self.entries:
            raise KeyError("observation is not in any stored orbit")
        return apply_shift(self.entries[key], g)


def _check_local_loss_conditions(d, omega, b, family):
    for s in family:
        if s == Shift(0, 0):
            continue
        if not check_distribution_invariance(d, s):
            raise ConditionError("B3", f"distribution not invariant under shift {tuple(s)}")
        if not check_masked_invariance(d, omega, s):
            raise ConditionError("B3", f"masked distribution not invariant under shift {tuple(s)}")
    if not check_partition(family, b):
        raise ConditionError("B4", "translated supervision sets do not partition the grid")


def minimize_local_loss_equivariant(d: DiscreteDistribution, omega, b,
                                    family: TranslationFamily,
                                    check_conditions: bool = True) -> EquivariantTable:
    """Exact minimizer of E|M_B (.) f(Y) - M_B (.) X|^2 over equivariant f.

    Works orbit by orbit: every (atom, group shift) pair that can produce an
    orbit element contributes a shifted copy of the supervision mask and of the
    ground-truth atom; the minimizer is the per-pixel weighted mean. Sample
    pairs are weighted by atom probability split evenly over the shifts that
    realize the same observation (the orbit stabilizer), which also enforces
    the stabilizer symmetry of the stored values.

    With ``check_conditions=False`` the closed form is evaluated even when the
    hypotheses fail; pixels that no pair constrains are returned as NaN.
    """
    if check_conditions:
        _check_local_loss_conditions(d, omega, b, family)
    group = group_closure(family)
    n = family.n
    table = EquivariantTable(family=family, group=group)
    b_float = np.asarray(b, dtype=np.float64)

    orbits = {}  # rep key -> (rep image, list of (atom, prob, shift g with g(rep) == y))
    for img, p in d.atoms:
        y = apply_mask(img, omega)
        key, rep, _ = table.canonical(y)
        if key not in orbits:
            orbits[key] = (rep, [])
        rep = orbits[key][0]
        matches = [g for g in group if np.array_equal(apply_shift(rep, g), y)]
        w = p / len(matches)
        for g in matches:
            orbits[key][1].append((img, w, g))

    for key, (rep, pairs) in orbits.items():
        num = np.zeros((n, n))
        den = np.zeros((n, n))
        for img, w, g in pairs:
            ginv = shift_inverse(g, n)
            mask_g = apply_shift(b_float, ginv)
            num += w * mask_g * apply_shift(img, ginv)
            den += w * mask_g
        if check_conditions and not np.all(den > 0):
            raise ConditionError("B4", "some pixel receives no supervision from any "
                                       "(atom, shift) pair")
        with np.errstate(invalid="ignore", divide="ignore"):
            value = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)
        table.entries[key] = value
    return table


@dataclass
class TheoremReport:
    """Closed-form local-loss minimizer versus brute-force conditional expectation."""

    holds: bool
    max_abs_error: float
    equivariance_ok: bool
    num_observations: int
    lemma_reports: list = field(default_factory=list)

    def __str__(self):
        status = "holds" if self.holds else "FAILS"
        return (f"local-supervision identity {status} "
                f"(max |argmin - E[X|Y]| = {self.max_abs_error:.3e} over "
                f"{self.num_observations} observations, "
                f"equivariance {'ok' if self.equivariance_ok else 'BROKEN'})")


def verify_theorem_local_supervision(d: DiscreteDistribution, omega, b,
                                     family: TranslationFamily,
                                     tol: float = 1e-10) -> TheoremReport:
    """Check the two claims of the local-supervision identity on one instance.

    (i) the conditional expectation commutes with every family shift, and
    (ii) the closed-form equivariant minimizer of the supervision-restricted
    loss equals the conditional expectation at every supported observation.
    """
    lemma_reports = []
    equi_ok = True
    for s in family:
        if s == Shift(0, 0):
            continue
        rep = verify_lemma_invariance(d, omega, s)
        lemma_reports.append((s, rep))
        equi_ok = equi_ok and rep.holds

    table = minimize_local_loss_equivariant(d, omega, b, family)
    max_err = 0.0
    seen = set()
    count = 0
    for img, _ in d.atoms:
        y = apply_mask(img, omega)
        k = _key(y)
        if k in seen:
            continue
        seen.add(k)
        count += 1
        diff = np.abs(table.apply(y) - conditional_expectation(d, omega, y))
        max_err = max(max_err, float(np.max(diff)))
    return TheoremReport(holds=(equi_ok and max_err <= tol),
                         max_abs_error=max_err,
                         equivariance_ok=equi_ok,
                         num_observations=count,
                         lemma_reports=lemma_reports)


@dataclass
class SsduReport:
    """Outcome of the SSDU recovery identity checked by exact enumeration."""

    holds: bool
    max_abs_error: float
    num_conditioning_values: int
    num_joint_atoms: int
    max_error_on_intersection: float
    unconstrained_compared: int

    def __str__(self):
        status = "holds" if self.holds else "FAILS"
        return (f"ssdu identity {status} off the doubly-sampled set "
                f"(max err {self.max_abs_error:.3e} over "
                f"{self.num_conditioning_values} conditioning values, "
                f"{self.num_joint_atoms} joint atoms; "
                f"max err on the doubly-sampled set {self.max_error_on_intersection:.3e})")


def verify_ssdu(dx: DiscreteDistribution, domega: MaskDistribution,
                dlambda: MaskDistribution, tol: float = 1e-10) -> SsduReport:
    """Verify the SSDU identity on the full joint support of (X, Omega, Lambda).

    X, Omega and Lambda are taken mutually independent. For every conditioning
    value v = M_Lambda (.) M_Omega (.) X the left side is the posterior mean
    E[X | v] and the right side is the per-pixel weighted least-squares
    minimizer of the held-out loss; the two are compared per joint realization
    on the complement of Omega intersect Lambda. Right-side pixels that no
    group member constrains are left at 0 (any value minimizes the loss there)
    and the report also carries the maximum discrepancy ON the intersection,
    which demonstrates that the masking in the identity is required.
    """
    n = dx.n
    mean_omega = domega.mean_mask()
    if not np.all(mean_omega > 0):
        raise ValueError("E[M_Omega] must be positive elementwise")
    mean_lambda = dlambda.mean_mask()
    if not np.all(mean_lambda < 1):
        raise ValueError("E[M_Lambda] must be < 1 elementwise")
    total = len(dx.atoms) * len(domega.atoms) * len(dlambda.atoms)
    if total > ENUMERATION_CAP:
        raise EnumerationCapError(f"{total} joint atoms exceed cap {ENUMERATION_CAP}")

    groups = {}
    for x, px in dx.atoms:
        for om, pom in domega.atoms:
            xo = apply_mask(x, om)
            for lam, plam in dlambda.atoms:
                v = apply_mask(xo, lam)
                g = groups.setdefault(_key(v), [])
                g.append((x, om, lam, px * pom * plam))

    max_err = 0.0
    max_err_inter = 0.0
    unconstrained_compared = 0
    for members in groups.values():
        mass = sum(w for *_, w in members)
        lhs = np.zeros((n, n))
        num = np.zeros((n, n))
        den = np.zeros((n, n))
        for x, om, lam, w in members:
            lhs += w * x
            held_out = (1 - lam) * om  # loss weight: sampled by Omega, hidden from Lambda
            num += w * held_out * x
            den += w * held_out
        lhs /= mass
        constrained = den > 0
        rhs = np.where(constrained, num / np.where(constrained, den, 1.0), 0.0)
        diff = np.abs(lhs - rhs)
        for x, om, lam, w in members:
            inter = (om & lam).astype(bool)
            outside = ~inter
            unconstrained_compared += int(np.count_nonzero(outside & ~constrained))
            if np.any(outside & constrained):
                max_err = max(max_err, float(diff[outside & constrained].max()))
            if np.any(inter):
                max_err_inter = max(max_err_inter, float(diff[inter].max()))
    return SsduReport(holds=(max_err <= tol and unconstrained_compared == 0),
                      max_abs_error=max_err,
                      num_conditioning_values=len(groups),
                      num_joint_atoms=total,
                      max_error_on_intersection=max_err_inter,
                      unconstrained_compared=unconstrained_compared)


def random_invariant_distribution(n, family: TranslationFamily, seed,
                                  values=(0.0, 0.5, 1.0), num_base=3) -> DiscreteDistribution:
    """Random distribution that is exactly invariant under the family.

    Draws ``num_base`` images with entries from ``values``, closes each under
    the group generated by the family with uniform mass inside the orbit, and
    gives the orbits random total masses. Orbits of a group action are equal
    or disjoint, so merging duplicates preserves invariance exactly.
    """
    rng = np.random.default_rng(seed)
    group = group_closure(family)
    weights = rng.random(num_base) + 0.1
    weights /= weights.sum()
    atoms = []
    for w in weights:
        base = rng.choice(np.asarray(values, dtype=np.float64), size=(n, n))
        orbit = {}
        for g in group:
            img = apply_shift(base, g)
            orbit[_key(img)] = img
        for img in orbit.values():
            atoms.append((img, w / len(orbit)))
    return DiscreteDistribution(n, tuple(atoms))


@dataclass
class ReportRow:
    """One verification outcome in the plain-text / CSV reporting schema."""

    case_id: str
    check_name: str
    max_abs_error: float
    holds: bool

    def as_csv(self):
        return f"{self.case_id},{self.check_name},{self.max_abs_error:.6e},{self.holds}"

    def as_text(self):
        mark = "PASS" if self.holds else "FAIL"
        return f"[{mark}] {self.case_id}: {self.check_name} (max_abs_error={self.max_abs_error:.3e})"


def rows_to_csv(rows) -> str:
    lines = ["case_id,check_name,max_abs_error,holds"]
    lines += [r.as_csv() for r in rows]
    return "\n".join(lines) + "\n"
