"""Block-structured SDP solver (operator splitting) and SDPA export.

Problems have the conic standard form

    minimize    c . d
    subject to  A d = b,   d in (S+ x ... x S+) x R^free,

where each PSD block is stored in scaled symmetric vectorization (svec: the
off-diagonal entries carry a factor sqrt(2) so Euclidean inner products agree
with matrix inner products) and free scalars ride along unconstrained.

The solver alternates an equality-constrained quadratic step (one cached
sparse factorization of the regularized KKT system), a projection of each
block onto the PSD cone by symmetric eigendecomposition, and an
over-relaxed dual update.  It is deterministic: identical problems and
parameters reproduce the iterate sequence bitwise.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

SQRT2 = math.sqrt(2.0)


class SolverNumericalError(RuntimeError):
    """Raised when the KKT factorization fails; carries conditioning info."""


# -- svec helpers -----------------------------------------------------------


def svec_dim(n: int) -> int:
    return n * (n + 1) // 2


def svec_index(n: int, i: int, j: int) -> int:
    """Position of entry (i <= j) in column-stacked upper-triangle order."""
    if i > j:
        i, j = j, i
    return j * (j + 1) // 2 + i


def svec(M: np.ndarray) -> np.ndarray:
    n = M.shape[0]
    out = np.empty(svec_dim(n))
    k = 0
    for j in range(n):
        for i in range(j + 1):
            out[k] = M[i, j] * (1.0 if i == j else SQRT2)
            k += 1
    return out


def smat(v: np.ndarray, n: int) -> np.ndarray:
    M = np.zeros((n, n))
    k = 0
    for j in range(n):
        for i in range(j + 1):
            if i == j:
                M[i, j] = v[k]
            else:
                M[i, j] = M[j, i] = v[k] / SQRT2
            k += 1
    return M


def project_psd(M: np.ndarray) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm: clip negative eigenvalues."""
    M = np.asarray(M, dtype=float)
    if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, atol=1e-10):
        raise ValueError("project_psd expects a symmetric matrix")
    sym = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(sym)
    w = np.maximum(w, 0.0)
    out = (V * w) @ V.T
    return 0.5 * (out + out.T)


# -- problem and solution types ----------------------------------------------


@dataclass(frozen=True)
class SdpProblem:
    """Conic program data plus assembly metadata (set by the compiler)."""

    block_sizes: Tuple[int, ...]
    n_free: int
    A: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    block_descriptors: Tuple[str, ...] = ()
    meta: Optional[dict] = None

    def __post_init__(self):
        n = self.n_cols
        if self.A.shape != (len(self.b), n) or self.c.shape != (n,):
            raise ValueError(
                f"inconsistent problem: A {self.A.shape}, b {self.b.shape}, c {self.c.shape}, "
                f"expected {len(self.b)} rows x {n} cols"
            )

    @property
    def n_cols(self) -> int:
        return self.n_free + sum(svec_dim(s) for s in self.block_sizes)

    def block_offset(self, k: int) -> int:
        return self.n_free + sum(svec_dim(s) for s in self.block_sizes[:k])

    def block_slices(self) -> List[Tuple[int, int, int]]:
        """(offset, svec length, matrix size) per PSD block."""
        out = []
        off = self.n_free
        for s in self.block_sizes:
            d = svec_dim(s)
            out.append((off, d, s))
            off += d
        return out


@dataclass
class SolveParams:
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    tol_gap: float = 1e-6
    max_iter: int = 50_000
    rho: float = 1.0
    over_relaxation: float = 1.6
    adapt_every: int = 50
    check_every: int = 25
    equilibrate_passes: int = 0
    progress_csv: Optional[str] = None
    warm_start: Optional[np.ndarray] = None


@dataclass
class SdpSolution:
    gamma: float
    gamma_certified: float
    block_values: List[np.ndarray]
    free_values: np.ndarray
    status: str  # optimal | max_iter | infeasible-suspect
    primal_residual: float
    dual_residual: float
    gap: float
    eq_residual_l1: float
    iterations: int
    wall_time: float

    def block(self, k: int) -> np.ndarray:
        return self.block_values[k]


# -- solver -------------------------------------------------------------------


def _cone_projector(problem: SdpProblem):
    """Precompiled projection onto the product cone (free x PSD blocks).

    Blocks of equal size are stacked and projected with one batched
    eigendecomposition; 1x1 blocks are a plain clip.
    """
    ones = np.array(
        [off for off, _, s in problem.block_slices() if s == 1], dtype=int
    )
    by_size: Dict[int, List[int]] = {}
    for off, d, s in problem.block_slices():
        if s > 1:
            by_size.setdefault(s, []).append(off)
    groups = []
    for s, offs in sorted(by_size.items()):
        d = svec_dim(s)
        gather = np.asarray(offs, dtype=int)[:, None] + np.arange(d)[None, :]
        I = np.empty(d, dtype=int)
        J = np.empty(d, dtype=int)
        k = 0
        for j in range(s):
            for i in range(j + 1):
                I[k], J[k] = i, j
                k += 1
        unscale = np.where(I == J, 1.0, 1.0 / SQRT2)
        rescale = np.where(I == J, 1.0, SQRT2)
        groups.append((s, gather, I, J, unscale, rescale))

    def project(v: np.ndarray) -> np.ndarray:
        out = v.copy()
        if ones.size:
            out[ones] = np.maximum(v[ones], 0.0)
        for s, gather, I, J, unscale, rescale in groups:
            V = v[gather] * unscale
            M = np.zeros((gather.shape[0], s, s))
            M[:, I, J] = V
            M[:, J, I] = V
            w, Q = np.linalg.eigh(M)
            np.maximum(w, 0.0, out=w)
            R = (Q * w[:, None, :]) @ np.swapaxes(Q, 1, 2)
            out[gather] = R[:, I, J] * rescale
        return out

    return project


def _project_cone(problem: SdpProblem, v: np.ndarray) -> np.ndarray:
    return _cone_projector(problem)(v)


def _equilibrate(problem: SdpProblem, passes: int = 10):
    """Ruiz scaling with cone-respecting column groups.

    Rows scale freely; the svec columns of one PSD block share a single
    factor (a congruence with a multiple of the identity, so PSD-ness of the
    block is unchanged) and each free scalar scales on its own.  Operates on
    the raw CSR arrays so the scaling identity holds exactly.
    """
    A = problem.A.tocsr().astype(float).copy()
    A.sum_duplicates()
    A.sort_indices()
    m, n = A.shape
    data = A.data.copy()
    indices, indptr = A.indices, A.indptr
    row_counts = np.diff(indptr)
    d_r = np.ones(m)
    d_c = np.ones(n)
    # Column group per cone component: one group per free scalar, one per block.
    group_of = np.empty(n, dtype=int)
    group_of[: problem.n_free] = np.arange(problem.n_free)
    ngroups = problem.n_free
    for off, d, _ in problem.block_slices():
        group_of[off : off + d] = ngroups
        ngroups += 1
    for _ in range(passes):
        absd = np.abs(data)
        B = sp.csr_matrix((absd, indices, indptr), shape=(m, n))
        row_max = np.asarray(B.max(axis=1).todense()).ravel()
        r = 1.0 / np.sqrt(np.maximum(row_max, 1e-12))
        data *= np.repeat(r, row_counts)
        d_r *= r
        absd = np.abs(data)
        B = sp.csr_matrix((absd, indices, indptr), shape=(m, n))
        col_max = np.asarray(B.max(axis=0).todense()).ravel()
        gmax = np.zeros(ngroups)
        np.maximum.at(gmax, group_of, col_max)
        c_cols = (1.0 / np.sqrt(np.maximum(gmax, 1e-12)))[group_of]
        data *= c_cols[indices]
        d_c *= c_cols
    out = sp.csr_matrix((data, indices.copy(), indptr.copy()), shape=(m, n))
    return out, d_r, d_c


def _factor_normal(A: sp.csr_matrix):
    """Factor A A^T + reg I once; the equality step reuses it for every rho.

    The affine subproblem min c.x + (rho/2)||x - v||^2 s.t. Ax = b has the
    closed form x = v - (c + A^T nu)/rho with (A A^T) nu = rho (A v - b) - A c.
    """
    m = A.shape[0]
    reg = 1e-10
    K = (A @ A.T).tocsc() + reg * sp.identity(m, format="csc")
    try:
        return spla.splu(K)
    except RuntimeError as exc:
        raise SolverNumericalError(
            f"normal-equation factorization failed (rows={m}, nnz={K.nnz}): {exc}"
        ) from exc


def solve(problem: SdpProblem, params: Optional[SolveParams] = None) -> SdpSolution:
    """Run the splitting iteration until tolerances or the iteration cap."""
    p = params or SolveParams()
    t0 = time.perf_counter()
    A0, b0, c0 = problem.A, problem.b, problem.c
    n, m = A0.shape[1], A0.shape[0]
    if p.equilibrate_passes > 0:
        A, d_r, d_c = _equilibrate(problem, passes=p.equilibrate_passes)
    else:
        A = A0.tocsr().astype(float)
        d_r = np.ones(m)
        d_c = np.ones(n)
    b = d_r * b0
    c = d_c * c0
    project = _cone_projector(problem)
    rho = p.rho
    lu = _factor_normal(A)
    At = A.T.tocsr()
    Ac = A @ c

    if p.warm_start is not None:
        z = np.array(p.warm_start, dtype=float)
        if z.shape != (n,):
            raise ValueError(f"warm start has shape {z.shape}, expected ({n},)")
        z = z / d_c
    else:
        z = np.zeros(n)
    u = np.zeros(n)

    alpha = p.over_relaxation
    b_scale = 1.0 + float(np.linalg.norm(b0))
    log_rows: List[Tuple[int, float, float, float]] = []
    status = "max_iter"
    prim = dual = gap = float("inf")
    stall_window: List[float] = []
    it = 0
    inv_dr = 1.0 / d_r

    for it in range(1, p.max_iter + 1):
        v = z - u
        nu = lu.solve(rho * (A @ v - b) - Ac)
        x = v - (c + At @ nu) / rho
        x_hat = alpha * x + (1.0 - alpha) * z
        z_prev = z
        z = project(x_hat + u)
        u = u + x_hat - z

        if it % p.check_every == 0 or it == p.max_iter:
            # Residuals in the original (unequilibrated) row space.
            prim_vec = inv_dr * (A @ z - b)
            prim = float(np.linalg.norm(prim_vec)) / b_scale
            dual = rho * float(np.linalg.norm(z - z_prev)) / (1.0 + rho * float(np.linalg.norm(u)))
            cx, cz = float(c @ x), float(c @ z)
            gap = abs(cx - cz) / (1.0 + abs(cx) + abs(cz))
            if p.progress_csv:
                log_rows.append((it, prim, dual, gap))
            if prim <= p.tol_primal and dual <= p.tol_dual and gap <= p.tol_gap:
                status = "optimal"
                break
            stall_window.append(prim)
            if len(stall_window) > 40:
                stall_window.pop(0)
                # A pinned, large primal residual signals an empty cone
                # intersection; keep the floor high so slow feasible solves
                # are never misclassified.
                floor = max(1e-2, 100.0 * p.tol_primal)
                if min(stall_window) > floor and stall_window[0] <= min(stall_window) * 1.001:
                    status = "infeasible-suspect"
                    break

        if p.adapt_every and it % p.adapt_every == 0 and math.isfinite(prim) and dual > 0:
            factor = float(np.clip(math.sqrt(max(prim, 1e-16) / max(dual, 1e-16)), 0.5, 2.0))
            if abs(math.log(factor)) > math.log(1.1):
                rho *= factor
                u /= factor

    z_orig = d_c * z
    prim_vec = A0 @ z_orig - b0
    prim = float(np.linalg.norm(prim_vec)) / b_scale
    eq_l1 = float(np.abs(prim_vec).sum())
    gamma = float(c0 @ z_orig)
    blocks = [smat(z_orig[off : off + d], s) for off, d, s in problem.block_slices()]
    free = z_orig[: problem.n_free].copy()

    if p.progress_csv:
        with open(p.progress_csv, "w") as fh:
            fh.write("iter,primal,dual,gap\n")
            for row in log_rows:
                fh.write(f"{row[0]},{row[1]:.6e},{row[2]:.6e},{row[3]:.6e}\n")

    return SdpSolution(
        gamma=gamma,
        gamma_certified=gamma + max(0.0, eq_l1),
        block_values=blocks,
        free_values=free,
        status=status,
        primal_residual=prim,
        dual_residual=dual,
        gap=gap,
        eq_residual_l1=eq_l1,
        iterations=it,
        wall_time=time.perf_counter() - t0,
    )


# -- SDPA sparse export -------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def sdpa_triples(problem: SdpProblem) -> List[Tuple[int, int, int, int, float]]:
    """(matno, blkno, i, j, value) entries, upper triangle, 1-based.

    The file encodes the dual-standard form: our decision blocks become the
    PSD matrix variable, each equality row becomes one constraint matrix, and
    free scalars are split t = t+ - t- inside a trailing diagonal block.
    """
    entries: List[Tuple[int, int, int, int, float]] = []
    slices = problem.block_slices()
    n_psd = len(slices)
    free_block = n_psd + 1  # 1-based id of the diagonal block, if any

    def emit(matno: int, col: int, val: float) -> None:
        if col < problem.n_free:
            entries.append((matno, free_block, col + 1, col + 1, val))
            entries.append(
                (matno, free_block, problem.n_free + col + 1, problem.n_free + col + 1, -val)
            )
            return
        for bi, (off, d, s) in enumerate(slices):
            if off <= col < off + d:
                local = col - off
                j = int((math.isqrt(8 * local + 1) - 1) // 2)
                i = local - j * (j + 1) // 2
                scale = 1.0 if i == j else 1.0 / SQRT2
                entries.append((matno, bi + 1, i + 1, j + 1, val * scale))
                return
        raise AssertionError("column outside every block")

    cols = problem.c.nonzero()[0]
    for col in cols:
        emit(0, int(col), -float(problem.c[col]))
    Acoo = problem.A.tocoo()
    for r, col, val in zip(Acoo.row, Acoo.col, Acoo.data):
        emit(int(r) + 1, int(col), float(val))
    return entries


def export_sdpa(problem: SdpProblem, path: str) -> None:
    """Write the sparse SDPA (.dat-s) encoding of the problem."""
    entries = sdpa_triples(problem)
    sizes = [str(s) for s in problem.block_sizes]
    if problem.n_free:
        sizes.append(str(-2 * problem.n_free))
    lines = [
        str(len(problem.b)),
        str(len(sizes)),
        " ".join(sizes),
        " ".join(_fmt(v) for v in problem.b),
    ]
    for matno, blk, i, j, val in entries:
        lines.append(f"{matno} {blk} {i} {j} {_fmt(val)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_sdpa(path: str):
    """Parse a sparse SDPA file back into (m, sizes, c, triples).

    Kept simple and independent of the writer for round-trip checks.
    """
    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip() and not ln.startswith(("*", '"'))]
    m = int(raw[0])
    nblocks = int(raw[1])
    sizes = [int(tok) for tok in raw[2].replace(",", " ").split()]
    assert len(sizes) == nblocks
    cvec = [float(tok) for tok in raw[3].replace(",", " ").split()]
    triples = []
    for ln in raw[4:]:
        toks = ln.split()
        triples.append((int(toks[0]), int(toks[1]), int(toks[2]), int(toks[3]), float(toks[4])))
    return m, sizes, cvec, triples
