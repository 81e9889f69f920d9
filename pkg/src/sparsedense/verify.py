"""Named oracle verification suites behind the ``verify`` command.

Each suite returns :class:`~sparsedense.oracle.ReportRow` entries. A row
``holds`` when the check behaved as the theory demands, which for the
deliberately broken cases means the violation was detected.
"""

import numpy as np

from .oracle import (
    ConditionError,
    DiscreteDistribution,
    MaskDistribution,
    ReportRow,
    bernoulli_mask_distribution,
    conditional_expectation,
    minimize_local_loss_equivariant,
    random_invariant_distribution,
    verify_lemma_invariance,
    verify_ssdu,
    verify_theorem_local_supervision,
)
from .quadrants import quadrant_distribution
from .sampling import Shift, TranslationFamily, apply_shift, make_sparse_dense_masks


def fixed_observation_counterexample():
    """n=2 instance with invariant X but non-invariant single-pixel mask.

    The all-zero observation is fixed by the shift, forcing any equivariant
    restorer to output a shift-symmetric image there, while the true posterior
    mean is asymmetric: the locally supervised identity genuinely fails when
    its mask-invariance hypothesis is dropped.
    """
    a = np.array([[1.0, 0.0], [0.0, 1.0]])
    b = apply_shift(a, Shift(1, 0))
    d = DiscreteDistribution(2, ((a, 0.5), (b, 0.5)))
    omega = np.zeros((2, 2), dtype=np.uint8)
    omega[0, 0] = 1
    bmask = np.zeros((2, 2), dtype=np.uint8)
    bmask[:, 0] = 1
    family = TranslationFamily(2, ((0, 0), (1, 0)))
    return d, omega, bmask, family, a, b


def _uniform_orbit(base, n):
    shifts = [Shift(a, b) for a in range(n) for b in range(n)]
    orbit = {}
    for s in shifts:
        img = apply_shift(base, s)
        orbit[img.tobytes()] = img
    return DiscreteDistribution(n, tuple((img, 1.0 / len(orbit)) for img in orbit.values()))


def lemma_suite(tol=1e-12):
    """Shift-equivariance of the posterior mean on >= 10 invariant triples,
    plus one broken mask whose violation must be caught."""
    rows = []
    d16 = quadrant_distribution(16)
    omega16 = make_sparse_dense_masks(16)[0]
    for s in (Shift(8, 0), Shift(0, 8), Shift(8, 8)):
        rep = verify_lemma_invariance(d16, omega16, s, tol=tol)
        rows.append(ReportRow(f"quadrant-16-shift-{s.a}-{s.b}", "lemma-equivariance",
                              rep.max_abs_error, rep.holds))

    family4 = make_sparse_dense_masks(4)[2]
    omega4 = make_sparse_dense_masks(4)[0]
    for seed in range(3):
        d = random_invariant_distribution(4, family4, seed=seed)
        for s in (Shift(2, 0), Shift(0, 2), Shift(2, 2)):
            rep = verify_lemma_invariance(d, omega4, s, tol=tol)
            rows.append(ReportRow(f"random-4x4-seed-{seed}-shift-{s.a}-{s.b}",
                                  "lemma-equivariance", rep.max_abs_error, rep.holds))

    # full mask and single-row mask, both invariant designs
    rng = np.random.default_rng(99)
    d_orbit = _uniform_orbit(rng.integers(0, 2, (4, 4)).astype(float), 4)
    full = np.ones((4, 4), dtype=np.uint8)
    rep = verify_lemma_invariance(d_orbit, full, Shift(1, 0), tol=tol)
    rows.append(ReportRow("orbit-4x4-full-mask", "lemma-equivariance",
                          rep.max_abs_error, rep.holds))
    row_mask = np.zeros((4, 4), dtype=np.uint8)
    row_mask[1, :] = 1
    rep = verify_lemma_invariance(d_orbit, row_mask, Shift(1, 0), tol=tol)
    rows.append(ReportRow("orbit-4x4-row-mask-horizontal", "lemma-equivariance",
                          rep.max_abs_error, rep.holds))

    # broken: single-column mask under a horizontal shift must be detected
    col_mask = np.zeros((4, 4), dtype=np.uint8)
    col_mask[:, 0] = 1
    rep = verify_lemma_invariance(d_orbit, col_mask, Shift(1, 0), tol=tol)
    detected = (not rep.holds) and rep.witness is not None
    rows.append(ReportRow("orbit-4x4-column-mask-broken",
                          "lemma-counterexample-detected",
                          rep.max_abs_error, detected))
    return rows


def theorem_suite(num_random=20, tol=1e-10):
    """Closed-form equivariant minimizer equals the posterior mean."""
    rows = []
    d16 = quadrant_distribution(16)
    omega, b, family = make_sparse_dense_masks(16)
    rep = verify_theorem_local_supervision(d16, omega, b, family, tol=tol)
    rows.append(ReportRow("quadrant-16", "theorem-local-supervision",
                          rep.max_abs_error, rep.holds))
    omega4, b4, family4 = make_sparse_dense_masks(4)
    for seed in range(num_random):
        d = random_invariant_distribution(4, family4, seed=seed)
        rep = verify_theorem_local_supervision(d, omega4, b4, family4, tol=tol)
        rows.append(ReportRow(f"random-4x4-seed-{seed}", "theorem-local-supervision",
                              rep.max_abs_error, rep.holds))
    return rows


def nonvacuous_suite():
    """Dropping the mask-invariance hypothesis must break the identity."""
    rows = []
    d, omega, bmask, family, _, b_img = fixed_observation_counterexample()
    try:
        minimize_local_loss_equivariant(d, omega, bmask, family)
        rows.append(ReportRow("fixed-observation-2x2", "condition-b3-raised", 0.0, False))
    except ConditionError:
        rows.append(ReportRow("fixed-observation-2x2", "condition-b3-raised", 0.0, True))
    table = minimize_local_loss_equivariant(d, omega, bmask, family,
                                            check_conditions=False)
    y_zero = np.zeros((2, 2))
    gap = float(np.max(np.abs(table.apply(y_zero)
                              - conditional_expectation(d, omega, y_zero))))
    rows.append(ReportRow("fixed-observation-2x2", "identity-fails-without-b3",
                          gap, gap > 0.4))
    return rows


def _two_valued(n, values):
    import itertools
    atoms = []
    total = len(values) ** (n * n)
    for bits in itertools.product(values, repeat=n * n):
        atoms.append((np.array(bits, dtype=np.float64).reshape(n, n), 1.0 / total))
    return DiscreteDistribution(n, tuple(atoms))


def ssdu_suite(tol=1e-10):
    """SSDU recovery identity by full enumeration on 2x2 instances."""
    rows = []
    dx = _two_valued(2, (1.0, 2.0))
    full = MaskDistribution(2, ((np.ones((2, 2), dtype=np.uint8), 1.0),))
    empty = MaskDistribution(2, ((np.zeros((2, 2), dtype=np.uint8), 1.0),))
    rep = verify_ssdu(dx, full, empty, tol=tol)
    rows.append(ReportRow("2x2-degenerate-masks", "ssdu-identity",
                          rep.max_abs_error, rep.holds))
    bern = bernoulli_mask_distribution(2, 0.5)
    rep = verify_ssdu(dx, bern, bern, tol=tol)
    rows.append(ReportRow("2x2-bernoulli-half", "ssdu-identity",
                          rep.max_abs_error, rep.holds))
    rows.append(ReportRow("2x2-bernoulli-half", "ssdu-masking-necessary",
                          rep.max_error_on_intersection,
                          rep.max_error_on_intersection > 1e-6))
    return rows


SUITES = {
    "lemma": lemma_suite,
    "theorem-quadrant": lambda: theorem_suite(num_random=0),
    "theorem-random": theorem_suite,
    "quadrant": lambda: theorem_suite(num_random=0),
    "ssdu-2x2": ssdu_suite,
    "nonvacuous": nonvacuous_suite,
}


def run_suite(case="all"):
    if case == "all":
        rows = []
        for name in ("lemma", "theorem-random", "ssdu-2x2", "nonvacuous"):
            rows.extend(SUITES[name]())
        return rows
    if case not in SUITES:
        raise KeyError(f"unknown verify case {case!r}; choose from "
                       f"{sorted(SUITES)} or 'all'")
    return SUITES[case]()
