"""CPD solvers: alternating least squares and Gauss-Newton, plus seeded
initialization and the normalization pass.

Both solvers accept dense arrays or :class:`~cpdhr.core.IncompleteTensor`
inputs. All reported residuals are relative Frobenius residuals over the
observed entries. Complex least squares is handled throughout with the
convention that the gradient of f = 0.5*||r||^2 with respect to the real
parameter vector (Re U, Im U) is (Re g, Im g), where g is the mttkrp of the
residual against the conjugated factors.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import core
from .core import CpdModel, IncompleteTensor

ALGORITHMS = ("als", "gauss_newton", "gauss_newton_als_warmstart")
MISSING_STRATEGIES = ("expectation_imputation", "masked_residuals")

# singular values below PINV_RCOND * largest are truncated when inverting
# the (possibly degenerate) R x R Gramian systems
PINV_RCOND = 1e-12

# trust region bookkeeping for the Gauss-Newton solver
TR_ACCEPT = 1e-4
TR_COLLAPSE = 1e-15
CG_MAX_ITER = 60
CG_RTOL = 1e-2
WARMSTART_SWEEPS = 3

# tolerance-based stops only count as convergence once the gradient is this
# small relative to the data norm; a slow crawl that stalls the objective
# while far from stationarity is reported as non-converged instead. At a
# noisy local minimum the achievable gradient floor is limited by rounding
# in the objective (around sqrt(eps) times curvature), so the certificate
# cannot be much tighter than this.
GRAD_CERTIFICATE = 1e-6


@dataclass
class CpdOptions:
    """Solver configuration.

    init is either an integer seed (factors drawn by init_model) or an
    explicit CpdModel to start from.
    """

    rank: int
    algorithm: str = "gauss_newton_als_warmstart"
    max_iterations: int = 500
    rel_objective_tol: float = 1e-10
    rel_step_tol: float = 1e-12
    init: "CpdModel | int" = 0
    missing_data_strategy: str = "expectation_imputation"

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.rel_objective_tol <= 0 or self.rel_step_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}, expected one of {ALGORITHMS}")
        if self.missing_data_strategy not in MISSING_STRATEGIES:
            raise ValueError(
                f"unknown missing_data_strategy {self.missing_data_strategy!r}, "
                f"expected one of {MISSING_STRATEGIES}"
            )


@dataclass
class CpdDiagnostics:
    iterations: int
    converged: bool
    final_relative_residual: float
    objective_trace: list = field(default_factory=list)


def init_model(shape, rank, seed):
    """Seeded random model, entries standard circular complex Gaussian.

    Uses numpy's default_rng (PCG64). Per factor, in mode order, one block
    of real parts is drawn and then one block of imaginary parts, each
    standard normal, and the sum is scaled by 1/sqrt(2) so entries have
    unit total variance. Fixed (seed, shape, rank) gives bit-identical
    factors on any platform.
    """
    shape = core.check_shape(shape)
    if rank < 1:
        raise ValueError("rank must be >= 1")
    rng = np.random.default_rng(seed)
    factors = []
    for extent in shape:
        re = rng.standard_normal((extent, rank))
        im = rng.standard_normal((extent, rank))
        factors.append((re + 1j * im) / np.sqrt(2.0))
    return CpdModel(factors)


def normalize_model(model):
    """Unit-norm columns in every mode but the last, magnitudes and phases
    absorbed into the last mode.

    After normalization the largest-magnitude entry of each leading-mode
    column is real and positive, which pins the phase gauge. Reconstruction
    is unchanged.
    """
    factors = [f.copy() for f in model.factors]
    n_modes = len(factors)
    rank = factors[0].shape[1]
    carry = np.ones(rank, dtype=np.complex128)
    for n in range(n_modes - 1):
        f = factors[n]
        norms = np.linalg.norm(f, axis=0)
        if np.any(norms < 1e-300):
            raise ValueError(f"zero column in mode {n}, cannot normalize")
        top = np.abs(f).argmax(axis=0)
        phases = np.exp(1j * np.angle(f[top, np.arange(rank)]))
        scale = norms * phases
        factors[n] = f / scale
        carry = carry * scale
    factors[-1] = factors[-1] * carry
    return CpdModel(factors, normalized=True)


def _finalize(factors):
    model = CpdModel(factors)
    try:
        return normalize_model(model)
    except ValueError:
        # a dead column (rank overshoot) has no norm to move; hand the raw
        # factors back rather than erroring out of a finished solve
        return model


def _observed(t):
    """(values, mask-or-None, norm of observed part)."""
    if isinstance(t, IncompleteTensor):
        vals = t.values
        mask = t.mask
    else:
        vals = np.asarray(t, dtype=np.complex128)
        mask = None
    if not np.isfinite(vals).all():
        raise ValueError("tensor contains non-finite values")
    norm = float(np.linalg.norm(vals.ravel()))
    if norm == 0.0:
        raise ValueError("cannot decompose a tensor with no observed energy")
    return vals, mask, norm


def _start_factors(t_shape, opts, data_norm=None):
    if isinstance(opts.init, CpdModel):
        model = opts.init
        if model.shape != tuple(t_shape):
            raise ValueError(f"init model shape {model.shape} != tensor shape {tuple(t_shape)}")
        if model.rank != opts.rank:
            raise ValueError(f"init model rank {model.rank} != requested rank {opts.rank}")
        return [f.copy() for f in model.factors]
    factors = [f.copy() for f in init_model(t_shape, opts.rank, int(opts.init)).factors]
    if data_norm is not None:
        # place the random start at the data's scale; a badly scaled start
        # wastes iterations on pure rescaling
        start_norm = float(np.linalg.norm(core.reconstruct(factors).ravel()))
        if start_norm > 0:
            c = (data_norm / start_norm) ** (1.0 / len(factors))
            factors = [c * f for f in factors]
    return factors


def _rebalance(factors):
    # gauge-only: spread each column's magnitude evenly over the modes.
    # Keeping the blocks comparably scaled matters a lot downstream: a
    # spherical trust region on the stacked parameters is useless when one
    # mode carries all the magnitude.
    n_modes = len(factors)
    norms = [np.linalg.norm(f, axis=0) for f in factors]
    total = np.ones_like(norms[0])
    for nn in norms:
        total = total * nn
    alive = total > 0
    target = np.power(np.where(alive, total, 1.0), 1.0 / n_modes)
    for n in range(n_modes):
        safe = np.where(norms[n] > 0, norms[n], 1.0)
        scale = np.where(alive, target / safe, 1.0)
        factors[n] = factors[n] * scale


def _gramians(factors):
    return [f.conj().T @ f for f in factors]


def _hadamard_except(grams, skip):
    rank = grams[0].shape[0]
    w = np.ones((rank, rank), dtype=np.complex128)
    for m, g in enumerate(grams):
        if m != skip:
            w = w * g
    return w


def _masked_unfold_mask(mask, mode):
    return np.moveaxis(mask, mode, 0).reshape((mask.shape[mode], -1), order="F")


def _als_sweep_dense(tvals, factors):
    conj_factors = [np.conj(f) for f in factors]
    for n in range(len(factors)):
        m = core.mttkrp(tvals, conj_factors, n)
        w = _hadamard_except(_gramians(factors), n)
        factors[n] = m @ np.linalg.pinv(np.conj(w), rcond=PINV_RCOND, hermitian=True)
        conj_factors[n] = np.conj(factors[n])


def _als_sweep_masked(tvals, mask, factors):
    # per-row normal equations restricted to the observed entries; rows
    # with nothing observed get the least-norm answer (zero)
    for n in range(len(factors)):
        z = core.kr_chain(factors, n)
        zc = np.conj(z)
        mask_n = _masked_unfold_mask(mask, n)
        b = core.unfold(tvals, n) @ zc  # masked values are zero-filled
        a = np.einsum("ij,jr,js->irs", mask_n, z, zc, optimize=True)
        rows = np.empty_like(b)
        for i in range(b.shape[0]):
            rows[i] = b[i] @ np.linalg.pinv(a[i], rcond=PINV_RCOND, hermitian=True)
        factors[n] = rows


def _relative_residual(tvals, mask, factors, norm):
    xhat = core.reconstruct(factors)
    diff = xhat - tvals
    if mask is not None:
        diff = np.where(mask, diff, 0.0)
    return float(np.linalg.norm(diff.ravel())) / norm


def _als_iterate(tvals, mask, norm, factors, opts, n_sweeps, strategy):
    """Run up to n_sweeps ALS sweeps in place; returns (trace, converged)."""
    trace = []
    converged = False
    for _ in range(n_sweeps):
        if mask is None:
            _als_sweep_dense(tvals, factors)
        elif strategy == "expectation_imputation":
            work = np.where(mask, tvals, core.reconstruct(factors))
            _als_sweep_dense(work, factors)
        else:
            _als_sweep_masked(tvals, mask, factors)
        _rebalance(factors)
        rel = _relative_residual(tvals, mask, factors, norm)
        trace.append(rel)
        if len(trace) >= 2 and trace[-2] - trace[-1] < opts.rel_objective_tol:
            converged = True
            break
        if not math.isfinite(rel):
            converged = False
            break
    return trace, converged


def cpd_als(t, opts):
    """Alternating least squares CPD.

    Per sweep and mode, solves the linear least-squares update
    U_n <- mttkrp(t, conj(U), n) @ pinv(conj(W_n)) with W_n the Hadamard
    product of the other modes' Gramians. Missing entries are either
    imputed from the current reconstruction before every sweep or excluded
    via per-row masked normal equations, depending on
    opts.missing_data_strategy.
    """
    tvals, mask, norm = _observed(t)
    factors = _start_factors(tvals.shape, opts, data_norm=norm)
    trace, converged = _als_iterate(
        tvals, mask, norm, factors, opts, opts.max_iterations, opts.missing_data_strategy
    )
    diag = CpdDiagnostics(
        iterations=len(trace),
        converged=converged,
        final_relative_residual=trace[-1] if trace else float("nan"),
        objective_trace=trace,
    )
    return _finalize(factors), diag


# ---------------------------------------------------------------------------
# Gauss-Newton with dogleg trust region


def _dot(a, b):
    return sum(float(np.vdot(x, y).real) for x, y in zip(a, b))


def _norm_blocks(a):
    return math.sqrt(_dot(a, a))


def _axpy(alpha, x, y):
    return [yn + alpha * xn for xn, yn in zip(x, y)]


def _scaled(x, s):
    return [s * xn for xn in x]


def _residual(tvals, mask, factors):
    r = core.reconstruct(factors) - tvals
    if mask is not None:
        r = np.where(mask, r, 0.0)
    return r


def cpd_gradient(t, factors):
    """Gradient blocks of f = 0.5 * ||observed(reconstruct(U) - t)||^2.

    Block n is d f / d conj(U_n); stacking (Re, Im) of these blocks gives
    the gradient with respect to the real parameter vector.
    """
    tvals, mask, _ = _observed(t)
    factors = [np.asarray(f, dtype=np.complex128) for f in core._factor_list(factors)]
    r = _residual(tvals, mask, factors)
    conj_factors = [np.conj(f) for f in factors]
    return [core.mttkrp(r, conj_factors, n) for n in range(len(factors))]


def _make_dense_matvec(factors):
    grams = _gramians(factors)
    n_modes = len(factors)

    def matvec(delta):
        # cross[m] = U_m^H delta_m; the (n, m) off-diagonal block of the
        # Gauss-Newton operator contributes U_n (conj(W_nm) * cross[m]^T)
        # where W_nm is the Hadamard product of the Gramians of all modes
        # other than n and m.
        cross = [f.conj().T @ d for f, d in zip(factors, delta)]
        out = []
        for n in range(n_modes):
            acc = delta[n] @ np.conj(_hadamard_except(grams, n))
            for m in range(n_modes):
                if m == n:
                    continue
                w = np.ones_like(grams[0])
                for l in range(n_modes):
                    if l != n and l != m:
                        w = w * grams[l]
                acc = acc + factors[n] @ (np.conj(w) * cross[m].T)
            out.append(acc)
        return out

    return matvec


def _make_masked_matvec(factors, mask):
    n_modes = len(factors)
    conj_factors = [np.conj(f) for f in factors]

    def matvec(delta):
        tangent = None
        for m in range(n_modes):
            swapped = list(factors)
            swapped[m] = delta[m]
            term = core.reconstruct(swapped)
            tangent = term if tangent is None else tangent + term
        tangent = np.where(mask, tangent, 0.0)
        return [core.mttkrp(tangent, conj_factors, n) for n in range(n_modes)]

    return matvec


def _make_preconditioner(factors):
    grams = _gramians(factors)
    pinvs = [
        np.linalg.pinv(np.conj(_hadamard_except(grams, n)), rcond=PINV_RCOND, hermitian=True)
        for n in range(len(factors))
    ]

    def prec(r):
        return [rn @ pn for rn, pn in zip(r, pinvs)]

    return prec


def _pcg(matvec, b, prec, max_iter=CG_MAX_ITER, rtol=CG_RTOL):
    x = [np.zeros_like(bn) for bn in b]
    r = [bn.copy() for bn in b]
    b_norm = _norm_blocks(b)
    if b_norm == 0.0:
        return x
    z = prec(r)
    p = [zn.copy() for zn in z]
    rz = _dot(r, z)
    for _ in range(max_iter):
        ap = matvec(p)
        pap = _dot(p, ap)
        if pap <= 0.0:
            break
        alpha = rz / pap
        x = _axpy(alpha, p, x)
        r = _axpy(-alpha, ap, r)
        if _norm_blocks(r) <= rtol * b_norm:
            break
        z = prec(r)
        rz_next = _dot(r, z)
        if rz_next <= 0.0:
            break
        p = _axpy(rz_next / rz, p, z)
        rz = rz_next
    return x


def _dogleg_step(g, p_gn, matvec, delta):
    """Classic dogleg: Gauss-Newton point if inside the region, otherwise
    the steepest-descent / dogleg boundary point."""
    gn_norm = _norm_blocks(p_gn)
    if gn_norm <= delta and gn_norm > 0.0:
        return p_gn
    g_norm2 = _dot(g, g)
    bg = matvec(g)
    gbg = _dot(g, bg)
    if gbg <= 0.0:
        return _scaled(g, -delta / math.sqrt(g_norm2))
    alpha = g_norm2 / gbg
    p_u = _scaled(g, -alpha)
    pu_norm = alpha * math.sqrt(g_norm2)
    if pu_norm >= delta:
        return _scaled(g, -delta / math.sqrt(g_norm2))
    d = [pb - pu for pb, pu in zip(p_gn, p_u)]
    a = _dot(d, d)
    if a == 0.0:
        return p_u
    b = 2.0 * _dot(p_u, d)
    c = pu_norm**2 - delta**2
    tau = (-b + math.sqrt(max(b * b - 4.0 * a * c, 0.0))) / (2.0 * a)
    return _axpy(tau, d, p_u)


def cpd_nls(t, opts):
    """Gauss-Newton CPD with block-Jacobi preconditioned CG inner solves
    and a dogleg trust region on the stacked factor parameters.

    The objective is half the squared Frobenius residual over observed
    entries. With masked_residuals the Gramian operator excludes the
    missing entries; with expectation_imputation the dense operator is
    used (the gradient is identical either way since imputed entries carry
    zero residual). Trust region collapse below 1e-15 is reported as
    non-convergence, never as an exception.
    """
    tvals, mask, norm = _observed(t)
    factors = _start_factors(tvals.shape, opts, data_norm=norm)
    use_masked_operator = mask is not None and opts.missing_data_strategy == "masked_residuals"

    r = _residual(tvals, mask, factors)
    f_val = 0.5 * float(np.vdot(r, r).real)
    rel = math.sqrt(2.0 * f_val) / norm

    x_norm = _norm_blocks(factors)
    delta = max(0.3 * x_norm, 1e-3)
    delta_max = max(10.0 * x_norm, 10.0)

    trace = []
    converged = False
    conj_factors = [np.conj(f) for f in factors]

    for _ in range(opts.max_iterations):
        g = [core.mttkrp(r, conj_factors, n) for n in range(len(factors))]
        g_norm = _norm_blocks(g)
        if g_norm <= 1e-13 * norm:
            trace.append(rel)
            converged = True
            break
        stationary = g_norm <= GRAD_CERTIFICATE * norm

        if use_masked_operator:
            matvec = _make_masked_matvec(factors, mask)
        else:
            matvec = _make_dense_matvec(factors)
        prec = _make_preconditioner(factors)
        p_gn = _pcg(matvec, _scaled(g, -1.0), prec)
        step = _dogleg_step(g, p_gn, matvec, delta)
        step_norm = _norm_blocks(step)

        trial = [fn + sn for fn, sn in zip(factors, step)]
        r_trial = _residual(tvals, mask, trial)
        f_trial = 0.5 * float(np.vdot(r_trial, r_trial).real)
        predicted = -(_dot(g, step) + 0.5 * _dot(step, matvec(step)))
        actual = f_val - f_trial

        accepted = predicted > 0.0 and actual > 0.0 and actual / predicted > TR_ACCEPT
        rho = actual / predicted if predicted > 0.0 else -math.inf
        prev_rel = rel
        if accepted:
            factors = trial
            _rebalance(factors)
            conj_factors = [np.conj(fn) for fn in factors]
            r = r_trial
            f_val = f_trial
            rel = math.sqrt(2.0 * f_val) / norm
        trace.append(rel)

        if rho > 0.75 and step_norm >= 0.9 * delta:
            delta = min(2.0 * delta, delta_max)
        elif rho < 0.25:
            delta = 0.25 * delta
        if delta < TR_COLLAPSE:
            converged = False
            break

        # At a noisy minimum the quadratic model is rounding noise and trial
        # steps get rejected, so the stall test must not require acceptance;
        # the gradient certificate is what makes stopping here sound.
        if stationary and prev_rel - rel < opts.rel_objective_tol:
            converged = True
            break
        if accepted and stationary and step_norm < opts.rel_step_tol * max(1.0, _norm_blocks(factors)):
            converged = True
            break

    if not trace:
        trace.append(rel)
    diag = CpdDiagnostics(
        iterations=len(trace),
        converged=converged,
        final_relative_residual=trace[-1],
        objective_trace=trace,
    )
    return _finalize(factors), diag


def cpd(t, opts):
    """Dispatch on opts.algorithm; the warmstart variant runs a few ALS
    sweeps and hands the result to Gauss-Newton."""
    if opts.algorithm == "als":
        return cpd_als(t, opts)
    if opts.algorithm == "gauss_newton":
        return cpd_nls(t, opts)

    tvals, mask, norm = _observed(t)
    factors = _start_factors(tvals.shape, opts)
    _als_iterate(tvals, mask, norm, factors, opts, WARMSTART_SWEEPS, opts.missing_data_strategy)
    warm_opts = CpdOptions(
        rank=opts.rank,
        algorithm="gauss_newton",
        max_iterations=opts.max_iterations,
        rel_objective_tol=opts.rel_objective_tol,
        rel_step_tol=opts.rel_step_tol,
        init=CpdModel(factors),
        missing_data_strategy=opts.missing_data_strategy,
    )
    return cpd_nls(t, warm_opts)
