"""Convergence studies over the oscillation parameter, reports, and the CLI.

The study pipeline for each N in the configured list:

  * mesh the perturbed rectangle at eps = 1/(2N+1),
  * solve for the eigenvalue pair that continues the double limit
    eigenvalue (matched to the limit modes by mass-weighted overlap),
  * Richardson-extrapolate the pair in the mesh size (two meshes, ratio
    two, second-order error model),
  * pair the ascending FEM values with the ascending branch predictions
    and record the remainders at expansion orders 0..3,
  * record the H1 error over the upper rectangle against the interpolated
    limit eigenfunction and the measured cluster gap.

Everything downstream (slope fits, CSV/JSON reports, the cache of wall
constants and branch corrections) lives here as well, together with the
argparse front end exposed as the ``oscwall`` console script.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import cell as cellprob
from . import composite as comp
from . import corrector as corr
from . import femcore, limitspec, meshgen
from .cell import CellConstants, cell_constants
from .limitspec import CLUSTER_MODES, LAMBDA0, limit_cluster
from .meshgen import EpsilonParam, Tag
from .profile import parse_descriptor

#: default cap on N: the wall must resolve 2N+1 periods, so runtime grows
#: linearly in N with no extra verification value at desk scale
MAX_N_DEFAULT = 15

CSV_COLUMNS = ("N", "eps", "branch", "lambda_eps", "pred0", "pred1",
               "pred2", "pred3", "rem0", "rem1", "rem2", "rem3",
               "h1_err", "cluster_gap")

#: a branch match is ambiguous when the runner-up candidate's overlap with
#: the same limit mode comes within this factor of the matched one (or the
#: match itself is essentially noise)
OVERLAP_MARGIN = 2.0
OVERLAP_FLOOR = 0.1


class StudyError(RuntimeError):
    """A convergence study could not produce a usable report."""


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class StudyConfig:
    """Inputs of one convergence study (JSON round-trippable)."""

    profile: str = "cosine:d=1,a=0.4"
    N_list: tuple[int, ...] = (3, 5, 7, 9, 11, 13)
    beta: float = 0.5
    cells_per_half_period: int = 6
    h_bulk: float = 1.0 / 24.0
    richardson: bool = True
    strip_T: float = 8.0
    strip_resolution: int = 8
    strip_grading: float = 1.15
    corrector_h: float = 1.0 / 64.0
    trace_modes: int = 12
    orders: tuple[int, ...] = (0, 1, 2, 3)
    eig_count: int = 6
    eig_tol: float = 1e-10
    pair_tol: float = 1e-12
    seed: int = 0
    max_N: int = MAX_N_DEFAULT

    def __post_init__(self):
        parse_descriptor(self.profile)   # raises on malformed descriptors
        object.__setattr__(self, "N_list", tuple(int(n) for n in self.N_list))
        object.__setattr__(self, "orders", tuple(int(k) for k in self.orders))
        ns = self.N_list
        if not ns:
            raise ValueError("N_list must not be empty")
        if any(n < 1 for n in ns):
            raise ValueError("all N must be >= 1")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("N_list must be strictly increasing")
        if ns[-1] > self.max_N:
            raise ValueError(f"N={ns[-1]} exceeds the configured cap "
                             f"max_N={self.max_N}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if any(k not in (0, 1, 2, 3) for k in self.orders):
            raise ValueError("orders must be a subset of {0,1,2,3}")
        if self.eig_count < 2:
            raise ValueError("eig_count must be >= 2")

    @staticmethod
    def from_dict(data: dict) -> "StudyConfig":
        known = {f.name for f in fields(StudyConfig)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return StudyConfig(**data)

    @staticmethod
    def from_json(path: str) -> "StudyConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return StudyConfig.from_dict(json.load(fh))


def config_hash(cfg: StudyConfig) -> str:
    """Short deterministic hash of every numerically relevant field."""
    blob = json.dumps(asdict(cfg), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _predictor_hash(cfg: StudyConfig) -> str:
    keys = ("profile", "strip_T", "strip_resolution", "strip_grading",
            "corrector_h", "trace_modes")
    blob = json.dumps({k: getattr(cfg, k) for k in keys}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# branch predictions (cell constants + corrector recurrence, cached)


@dataclass(frozen=True)
class BranchPredictor:
    """Expansion coefficients of one eigenvalue branch."""

    branch: int
    lambdas: tuple[float, float, float, float]
    kappa1: float
    kappa2: float
    max_residue: float
    alpha01: tuple[float, ...]

    def predict(self, eps: float, order: int) -> float:
        return comp.predicted_lambda(self.lambdas, eps, order)


def _predictor_from_correction(b: corr.BranchCorrection) -> BranchPredictor:
    res = max((abs(v) for vs in b.residues.values()
               for v in np.atleast_1d(vs)), default=0.0)
    return BranchPredictor(branch=b.branch, lambdas=tuple(b.lambdas),
                           kappa1=b.kappa1, kappa2=b.kappa2, max_residue=res,
                           alpha01=tuple(b.alpha01.coeffs.tolist()))


def compute_predictors(cfg: StudyConfig, cache_dir: str | None = None,
                       verbose: bool = False
                       ) -> tuple[CellConstants, tuple[BranchPredictor, ...]]:
    """Cell constants plus extrapolated branch corrections, with caching."""
    path = None
    if cache_dir is not None:
        path = os.path.join(cache_dir, f"predictors-{_predictor_hash(cfg)}.json")
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
            cc = CellConstants(**data["cell"])
            preds = tuple(BranchPredictor(
                branch=d["branch"], lambdas=tuple(d["lambdas"]),
                kappa1=d["kappa1"], kappa2=d["kappa2"],
                max_residue=d["max_residue"], alpha01=tuple(d["alpha01"]))
                for d in data["branches"])
            return cc, preds

    p = parse_descriptor(cfg.profile)
    t0 = time.perf_counter()
    cc = cell_constants(p, T=cfg.strip_T,
                        cells_per_half_period=cfg.strip_resolution,
                        grading=cfg.strip_grading, richardson=True,
                        T_check=cfg.strip_T + 4.0)
    if verbose:
        print(f"[predict] cell constants in {time.perf_counter() - t0:.1f}s: "
              f"C={cc.C:.6f} C_I={cc.C_I:.3e} C_II={cc.C_II:.6f}",
              file=sys.stderr)

    runs = []
    for h in (cfg.corrector_h, 0.5 * cfg.corrector_h):
        cluster = limit_cluster(meshgen.mesh_limit_domain(h),
                                backend="analytic", nmodes=cfg.trace_modes)
        runs.append(corr.corrector_pipeline(cluster, cc.C, cc.C_I, cc.C_II,
                                            nmodes=cfg.trace_modes))
    both = tuple(corr.extrapolate_corrections(runs[0][l], runs[1][l])
                 for l in range(2))
    preds = tuple(_predictor_from_correction(b) for b in both)
    if verbose:
        for b in preds:
            l0, l1, l2, l3 = b.lambdas
            print(f"[predict] branch {b.branch}: lambda1={l1:.5f} "
                  f"lambda2={l2:.5f} lambda3={l3:.5f}", file=sys.stderr)

    if path is not None:
        os.makedirs(cache_dir, exist_ok=True)
        data = {"cell": asdict(cc),
                "branches": [asdict(b) for b in preds]}
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
        os.replace(tmp, path)
    return cc, preds


# ---------------------------------------------------------------------------
# slope fitting and branch pairing


def fit_slope(points) -> tuple[float, float, float]:
    """Least-squares exponent of value ~ C * eps**slope.

    `points` is a sequence of (eps, value) pairs; returns
    (slope, r_squared, intercept) of the fit of log(value) against
    log(eps).  Requires at least three points with positive entries.
    """
    pts = [(float(e), float(v)) for e, v in points]
    if len(pts) < 3:
        raise ValueError("slope fit needs at least 3 points")
    if any(e <= 0.0 or v <= 0.0 for e, v in pts):
        raise ValueError("slope fit needs positive eps and values")
    x = np.log([e for e, _ in pts])
    y = np.log([v for _, v in pts])
    A = np.column_stack([x, np.ones_like(x)])
    sol, _, _, _ = np.linalg.lstsq(A, y, rcond=None)
    slope, intercept = float(sol[0]), float(sol[1])
    resid = y - A @ sol
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(resid @ resid) / ss_tot
    return slope, r2, intercept


@dataclass(frozen=True)
class BranchPairing:
    """Index-wise pairing of ascending FEM values with predictions."""

    mismatch: float        # total |fem - prediction| of the kept pairing
    swapped: float         # total mismatch if the pairing were swapped
    ambiguous: bool        # the two pairings are indistinguishable


def pair_branches(fem_values, predictions, tol: float = 1e-12
                  ) -> BranchPairing:
    """Pair two ascending FEM eigenvalues with two ascending predictions.

    The identity pairing of two ascending lists always minimises the total
    mismatch, so a swapped pairing winning means the inputs were crossed;
    that raises.  Pairings within `tol` of each other are ambiguous and
    reported as such so the caller can flag the row.
    """
    f = [float(v) for v in fem_values]
    p = [float(v) for v in predictions]
    if len(f) != 2 or len(p) != 2:
        raise ValueError("pair_branches expects exactly two values per side")
    keep = abs(f[0] - p[0]) + abs(f[1] - p[1])
    swap = abs(f[0] - p[1]) + abs(f[1] - p[0])
    if keep > swap + tol:
        raise StudyError("crossed branch values: the swapped pairing beats "
                         "the index-wise one; inputs must be ascending")
    return BranchPairing(mismatch=keep, swapped=swap,
                         ambiguous=abs(keep - swap) <= tol)


# ---------------------------------------------------------------------------
# the study itself


@dataclass
class StudyRow:
    N: int
    eps: float
    branch: int
    lambda_eps: float = math.nan
    pred: tuple[float, float, float, float] = (math.nan,) * 4
    rem: tuple[float, float, float, float] = (math.nan,) * 4
    h1_err: float = math.nan
    cluster_gap: float = math.nan
    flagged: bool = False
    note: str = ""

    def as_dict(self) -> dict:
        d = {"N": self.N, "eps": self.eps, "branch": self.branch,
             "lambda_eps": self.lambda_eps}
        for k in range(4):
            d[f"pred{k}"] = self.pred[k]
        for k in range(4):
            d[f"rem{k}"] = self.rem[k]
        d["h1_err"] = self.h1_err
        d["cluster_gap"] = self.cluster_gap
        d["flagged"] = self.flagged
        d["note"] = self.note
        return d


@dataclass
class ConvergenceReport:
    config: StudyConfig
    config_hash: str
    rows: list[StudyRow]
    slopes: dict
    metadata: dict

    def csv_text(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for r in self.rows:
            d = r.as_dict()
            parts = []
            for col in CSV_COLUMNS:
                v = d[col]
                parts.append(str(v) if isinstance(v, int)
                             else _fmt_float(v))
            lines.append(",".join(parts))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"config": asdict(self.config),
                "config_hash": self.config_hash,
                "rows": [r.as_dict() for r in self.rows],
                "slopes": self.slopes,
                "metadata": self.metadata}


def _fmt_float(v: float) -> str:
    if not math.isfinite(v):
        return "nan"
    return format(v, ".12e")


def _limit_mode_values(mesh: meshgen.Mesh) -> np.ndarray:
    """Both limit eigenfunctions interpolated at the mesh vertices."""
    x1 = mesh.vertices[:, 0]
    x2 = mesh.vertices[:, 1]
    return np.column_stack([m.eval(x1, x2) for m in CLUSTER_MODES])


def _solve_level(p, eps_param, cphp, h_bulk, cfg):
    """One eigensolve level: returns (mesh, M, cluster values, vectors)."""
    mesh = meshgen.mesh_perturbed_domain(p, eps_param,
                                         cells_per_half_period=cphp,
                                         h_bulk=h_bulk)
    K, M = femcore.assemble(mesh)
    free, _ = femcore.dirichlet_split(mesh, Tag.GAMMA_EPS)
    Kr = femcore.restrict(K, free)
    Mr = femcore.restrict(M, free)
    return mesh, M, Kr, Mr, free


def _select_branches(mesh, M, pairs_full):
    """Match eigenvectors to the two limit modes by M-weighted overlap.

    Returns (values, vectors, overlaps) in branch order.  Proximity in
    eigenvalue alone is unreliable at large eps, where an unrelated
    eigenvalue can sit between (or beyond) the two cluster branches.
    """
    modes = _limit_mode_values(mesh)
    norms = np.sqrt(np.einsum("ij,ij->j", modes, M @ modes))
    vecs = np.column_stack([p.vector for p in pairs_full])
    overlap = np.abs(modes.T @ (M @ vecs)) / norms[:, None]   # (2, count)

    best = (-1, -1)
    score = -1.0
    for j1 in range(vecs.shape[1]):
        for j2 in range(vecs.shape[1]):
            if j1 == j2:
                continue
            s = overlap[0, j1] + overlap[1, j2]
            if s > score:
                score = s
                best = (j1, j2)
    picked = []
    others = [j for j in range(vecs.shape[1]) if j not in best]
    for l, j in enumerate(best):
        vec = pairs_full[j].vector
        sign = np.sign(modes[:, l] @ (M @ vec)) or 1.0
        runner_up = max((overlap[l, jo] for jo in others), default=0.0)
        decisive = (overlap[l, j] >= OVERLAP_FLOOR
                    and overlap[l, j] >= OVERLAP_MARGIN * runner_up)
        picked.append((pairs_full[j].value, sign * vec, decisive))
    return picked


def _richardson_pair(coarse: float, fine: float) -> float:
    return (4.0 * fine - coarse) / 3.0


def run_study(cfg: StudyConfig, cache_dir: str | None = None,
              verbose: bool = False) -> ConvergenceReport:
    """Run the full eigenvalue convergence study for one configuration."""
    t_start = time.perf_counter()
    p = parse_descriptor(cfg.profile)
    cc, preds = compute_predictors(cfg, cache_dir=cache_dir, verbose=verbose)
    lam1_mean = 0.5 * (preds[0].lambdas[1] + preds[1].lambdas[1])

    rows: list[StudyRow] = []
    for N in cfg.N_list:
        eps_param = EpsilonParam(N)
        eps = eps_param.eps
        try:
            rows.extend(_study_one_N(p, eps_param, cfg, preds, lam1_mean,
                                     verbose))
        except Exception as exc:   # flagged row, study may still survive
            note = f"{type(exc).__name__}: {exc}"
            if verbose:
                print(f"[study] N={N} flagged: {note}", file=sys.stderr)
            for branch in (1, 2):
                rows.append(StudyRow(N=N, eps=eps, branch=branch,
                                     flagged=True, note=note))

    n_flagged = sum(r.flagged for r in rows)
    if n_flagged * 2 > len(rows):
        raise StudyError(f"study failed: {n_flagged} of {len(rows)} rows "
                         "flagged")

    slopes = _fit_all_slopes(rows, cfg.orders)
    meta = {
        "package": "oscwall",
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "cell_constants": asdict(cc),
        "branch_lambdas": {str(b.branch): list(b.lambdas) for b in preds},
        "max_corrector_residue": max(b.max_residue for b in preds),
        "flagged_rows": n_flagged,
        "runtime_seconds": round(time.perf_counter() - t_start, 3),
    }
    return ConvergenceReport(config=cfg, config_hash=config_hash(cfg),
                             rows=rows, slopes=slopes, metadata=meta)


def _study_one_N(p, eps_param, cfg, preds, lam1_mean, verbose):
    eps = eps_param.eps
    target = LAMBDA0 + eps * lam1_mean
    levels = [(cfg.cells_per_half_period, cfg.h_bulk)]
    if cfg.richardson:
        levels.append((2 * cfg.cells_per_half_period, 0.5 * cfg.h_bulk))

    per_level = []
    t0 = time.perf_counter()
    for cphp, h in levels:
        mesh, M, Kr, Mr, free = _solve_level(p, eps_param, cphp, h, cfg)
        reduced = femcore.eigs_smallest_near(Kr, Mr, target, cfg.eig_count,
                                             tol=cfg.eig_tol, seed=cfg.seed)
        full = []
        for rp in reduced:
            vec = np.zeros(mesh.num_vertices)
            vec[free] = rp.vector
            full.append(femcore.EigenPair(rp.value, vec, rp.residual))
        per_level.append((mesh, M, _select_branches(mesh, M, full)))

    mesh, M, picked = per_level[-1]
    values = [pk[0] for pk in picked]
    if cfg.richardson:
        coarse = [pk[0] for pk in per_level[0][2]]
        values = [_richardson_pair(c, f) for c, f in zip(coarse, values)]

    # contract checks: ascending order must match the branch order, and the
    # value-based pairing must agree with the eigenvector-based matching
    flagged = False
    note = ""
    if not values[0] <= values[1]:
        flagged = True
        note = "branch values out of order after eigenvector matching"
    pred1 = [b.predict(eps, 1) for b in preds]
    pairing = pair_branches(sorted(values), sorted(pred1), tol=cfg.pair_tol)
    if pairing.ambiguous:
        flagged = True
        note = "ambiguous branch pairing (mismatch within tolerance)"
    if not all(pk[2] for pk in picked):
        flagged = True
        note = "ambiguous eigenvector match against the limit modes"

    modes = _limit_mode_values(mesh)
    y = mesh.vertices[:, 1]
    upper = np.min(y[mesh.triangles], axis=1) >= -1e-12
    gap = values[1] - values[0]

    rows = []
    for l, b in enumerate(preds):
        lam = values[l]
        pred = tuple(b.predict(eps, k) for k in range(4))
        rem = tuple(abs(lam - pk) for pk in pred)
        err = picked[l][1] - modes[:, l]
        semi, l2 = femcore.energy_norms_on_triangles(mesh, err,
                                                     tri_mask=upper)
        h1 = math.hypot(semi, l2)
        rows.append(StudyRow(N=eps_param.N, eps=eps, branch=b.branch,
                             lambda_eps=lam, pred=pred, rem=rem, h1_err=h1,
                             cluster_gap=gap, flagged=flagged, note=note))
    if verbose:
        print(f"[study] N={eps_param.N}: lambda=({values[0]:.6f}, "
              f"{values[1]:.6f}) gap={gap:.4e} "
              f"({time.perf_counter() - t0:.1f}s)", file=sys.stderr)
    return rows


def _fit_all_slopes(rows, orders) -> dict:
    slopes: dict = {}
    for branch in (1, 2):
        entry = {}
        good = [r for r in rows if r.branch == branch and not r.flagged]
        for k in orders:
            pts = [(r.eps, r.rem[k]) for r in good]
            try:
                slope, r2, intercept = fit_slope(pts)
            except ValueError as exc:
                entry[f"rem{k}"] = {"error": str(exc)}
                continue
            entry[f"rem{k}"] = {"slope": slope, "r_squared": r2,
                                "intercept": intercept,
                                "flagged": r2 < 0.9}
        slopes[f"branch{branch}"] = entry
    return slopes


def write_report(report: ConvergenceReport, out_dir: str) -> dict:
    """Write study.csv / study.json / slopes.json; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {"csv": os.path.join(out_dir, "study.csv"),
             "json": os.path.join(out_dir, "study.json"),
             "slopes": os.path.join(out_dir, "slopes.json")}
    with open(paths["csv"], "w", encoding="utf-8") as fh:
        fh.write(report.csv_text())
    with open(paths["json"], "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(paths["slopes"], "w", encoding="utf-8") as fh:
        json.dump({"config_hash": report.config_hash,
                   "slopes": report.slopes}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


# ---------------------------------------------------------------------------
# CLI


def _set_threads(n: int | None):
    if not n:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(limits=n)
    except ImportError:
        pass


def _emit(doc, out_dir: str | None, name: str):
    text = json.dumps(doc, indent=2, sort_keys=True)
    print(text)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _json_num(v: float):
    return float(v) if math.isfinite(v) else None


def _cmd_cell(cfg, args):
    p = parse_descriptor(cfg.profile)
    cc = cell_constants(p, T=cfg.strip_T,
                        cells_per_half_period=cfg.strip_resolution,
                        grading=cfg.strip_grading, richardson=True,
                        T_check=cfg.strip_T + 4.0)
    doc = {"profile": cc.profile, "T": cc.T,
           "resolution": cc.cells_per_half_period,
           "C": cc.C, "C_I": cc.C_I, "C_II": cc.C_II,
           "decay_rate_X": _json_num(cc.decay_rate_X),
           "decay_rate_Xtilde": _json_num(cc.decay_rate_Xtilde),
           "checks": {"two_height_delta_C": cc.two_height_delta_C,
                      "parity_max_err": cc.parity_max_err}}
    _emit(doc, args.out, "cell.json")
    return 0


def _cmd_limit(cfg, args):
    cluster = limit_cluster(meshgen.mesh_limit_domain(cfg.corrector_h),
                            backend=args.backend, nmodes=cfg.trace_modes)
    t = np.linspace(-0.5, 0.5, 9)
    sampled = {f"branch{l + 1}": [float(v) for v in cluster.series[l](t)]
               for l in range(2)}
    sampled["t"] = [float(v) for v in t]
    doc = {"lambda0": cluster.lambda0,
           "G": [[float(v) for v in row] for row in cluster.G],
           "rotation": [[float(v) for v in row] for row in cluster.rotation],
           "branch_traces_sampled": sampled,
           "nondegeneracy_gap": float(cluster.gap)}
    _emit(doc, args.out, "limit.json")
    return 0


def _cmd_correct(cfg, args):
    cache = os.path.join(args.out, "cache") if args.out else None
    _, preds = compute_predictors(cfg, cache_dir=cache, verbose=args.verbose)
    doc = [{"branch": b.branch, "lambda1": b.lambdas[1],
            "lambda2": b.lambdas[2], "lambda3": b.lambdas[3],
            "kappa1": b.kappa1, "kappa2": b.kappa2,
            "residues": b.max_residue, "trace_modes": len(b.alpha01) - 1}
           for b in preds]
    _emit(doc, args.out, "correct.json")
    return 0


def _cmd_predict(cfg, args):
    cache = os.path.join(args.out, "cache") if args.out else None
    _, preds = compute_predictors(cfg, cache_dir=cache, verbose=args.verbose)
    eps = EpsilonParam(args.N).eps
    b = preds[args.branch - 1]
    doc = {"branch": b.branch, "eps": eps, "order": args.order,
           "lambda_pred": b.predict(eps, args.order)}
    _emit(doc, args.out, "predict.json")
    return 0


def _cmd_eig(cfg, args):
    p = parse_descriptor(cfg.profile)
    cache = os.path.join(args.out, "cache") if args.out else None
    _, preds = compute_predictors(cfg, cache_dir=cache, verbose=args.verbose)
    lam1_mean = 0.5 * (preds[0].lambdas[1] + preds[1].lambdas[1])
    rows = _study_one_N(p, EpsilonParam(args.N), cfg, preds, lam1_mean,
                        args.verbose)
    doc = {"N": args.N, "eps": rows[0].eps,
           "values": [r.lambda_eps for r in rows],
           "cluster_gap": rows[0].cluster_gap,
           "richardson": cfg.richardson}
    _emit(doc, args.out, "eig.json")
    return 0


def _cmd_residual(cfg, args):
    p = parse_descriptor(cfg.profile)
    beta = cfg.beta if args.beta is None else args.beta
    pair = comp.composite_pair(p, EpsilonParam(args.N), beta=beta,
                               T=cfg.strip_T, grading=cfg.strip_grading)
    field = pair[args.branch - 1]
    doc = {"eps": field.eps.eps, "beta": beta,
           "norm": comp.residual_norm(field, order=args.order)}
    _emit(doc, args.out, "residual.json")
    return 0


def _cmd_study(cfg, args):
    out = args.out or "out"
    cache = os.path.join(out, "cache")
    report = run_study(cfg, cache_dir=cache, verbose=args.verbose)
    paths = write_report(report, out)
    print(f"study {report.config_hash}: {len(report.rows)} rows, "
          f"{report.metadata['flagged_rows']} flagged, "
          f"{report.metadata['runtime_seconds']}s")
    for k in sorted(paths):
        print(f"  {paths[k]}")
    return 0


def _cmd_report(cfg, args):
    path = os.path.join(args.out or "out", "study.json")
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    print(f"config {doc['config_hash']}  profile "
          f"{doc['config']['profile']}")
    header = ("N", "branch", "lambda_eps", "rem1", "rem2", "h1_err",
              "cluster_gap")
    print(" ".join(f"{h:>12}" for h in header))
    for r in doc["rows"]:
        vals = (r["N"], r["branch"], r["lambda_eps"], r["rem1"], r["rem2"],
                r["h1_err"], r["cluster_gap"])
        cells = [f"{v:12d}" if isinstance(v, int) else f"{v:12.4e}"
                 for v in vals]
        flag = "  FLAG " + r["note"] if r["flagged"] else ""
        print(" ".join(cells) + flag)
    for branch, entry in sorted(doc["slopes"].items()):
        parts = []
        for key, fit in sorted(entry.items()):
            if "error" in fit:
                parts.append(f"{key}: {fit['error']}")
            else:
                parts.append(f"{key}: {fit['slope']:.3f} "
                             f"(r2={fit['r_squared']:.4f})")
        print(f"{branch}: " + "; ".join(parts))
    return 0


_COMMANDS = {"cell": _cmd_cell, "limit": _cmd_limit, "correct": _cmd_correct,
             "predict": _cmd_predict, "eig": _cmd_eig,
             "residual": _cmd_residual, "study": _cmd_study,
             "report": _cmd_report}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="oscwall",
        description="Eigenvalue asymptotics on a rectangle with a finely "
                    "oscillating Dirichlet wall: wall constants, corrector "
                    "recurrence, predictions, and convergence studies.")
    ap.add_argument("--config", help="JSON file with StudyConfig fields")
    ap.add_argument("--out", help="output directory (default: out)")
    ap.add_argument("--seed", type=int, help="override the eigensolver seed")
    ap.add_argument("--threads", type=int,
                    help="limit BLAS/OpenMP thread pools")
    ap.add_argument("--verbose", action="store_true",
                    help="progress lines on stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("cell", help="wall constants C, C_I, C_II and decay rates")
    sp = sub.add_parser("limit", help="limit cluster and its diagonalization")
    sp.add_argument("--backend", choices=("analytic", "fem"),
                    default="analytic")
    sub.add_parser("correct", help="corrector coefficients per branch")
    sp = sub.add_parser("predict", help="eigenvalue prediction at one eps")
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--order", type=int, default=3, choices=(0, 1, 2, 3))
    sp.add_argument("--branch", type=int, default=1, choices=(1, 2))
    sp = sub.add_parser("eig", help="FEM cluster eigenvalues at one eps")
    sp.add_argument("--N", type=int, required=True)
    sp = sub.add_parser("residual", help="composite residual norm at one eps")
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--beta", type=float, default=None,
                    help="cut-off exponent (default: config beta)")
    sp.add_argument("--branch", type=int, default=1, choices=(1, 2))
    sp.add_argument("--order", type=int, default=3, choices=(1, 2, 3))
    sub.add_parser("study", help="full convergence study -> csv/json reports")
    sub.add_parser("report", help="pretty-print a stored study.json")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _set_threads(args.threads)
    try:
        cfg = (StudyConfig.from_json(args.config) if args.config
               else StudyConfig())
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        return _COMMANDS[args.command](cfg, args)
    except (StudyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
