"""Shared fixtures: the expensive pipeline artifacts are built once."""

import time

import pytest

from oscwall import cell, composite, corrector, limitspec, meshgen, modes1d
from oscwall.profile import parse_descriptor
from oscwall.studycli import StudyConfig, run_study


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    return str(tmp_path_factory.mktemp("predictor-cache"))


@pytest.fixture(scope="session")
def flat_profile():
    return parse_descriptor("flat:d=1")


@pytest.fixture(scope="session")
def cosine_profile():
    return parse_descriptor("cosine:d=1,a=0.4")


@pytest.fixture(scope="session")
def flat_bundle(flat_profile):
    return cell.solve_cell_bundle(flat_profile, T=8.0, cells_per_half_period=8)


@pytest.fixture(scope="session")
def cosine_bundle(cosine_profile):
    return cell.solve_cell_bundle(cosine_profile, T=8.0,
                                  cells_per_half_period=8)


@pytest.fixture(scope="session")
def flat_cc(flat_profile):
    t0 = time.perf_counter()
    cc = cell.cell_constants(flat_profile)
    return cc, time.perf_counter() - t0


@pytest.fixture(scope="session")
def cosine_cc(cosine_profile):
    t0 = time.perf_counter()
    cc = cell.cell_constants(cosine_profile)
    return cc, time.perf_counter() - t0


@pytest.fixture(scope="session")
def analytic_cluster():
    return limitspec.limit_cluster(meshgen.mesh_limit_domain(1.0 / 64.0))


def _pipeline_pair(cc):
    """Corrector pipelines on meshes h and h/2 plus their extrapolation."""
    runs = []
    for h in (1.0 / 64.0, 1.0 / 128.0):
        cluster = limitspec.limit_cluster(meshgen.mesh_limit_domain(h))
        runs.append(corrector.corrector_pipeline(cluster, cc.C, cc.C_I,
                                                 cc.C_II))
    extr = tuple(corrector.extrapolate_corrections(runs[0][l], runs[1][l])
                 for l in range(2))
    return {"coarse": runs[0], "fine": runs[1], "extrapolated": extr}


@pytest.fixture(scope="session")
def flat_corrections(flat_cc):
    return _pipeline_pair(flat_cc[0])


@pytest.fixture(scope="session")
def cosine_corrections(cosine_cc):
    return _pipeline_pair(cosine_cc[0])


@pytest.fixture(scope="session")
def cosine_oracle(cosine_cc):
    cc = cosine_cc[0]
    return modes1d.oracle_corrections(cc.C, cc.C_I, cc.C_II)


@pytest.fixture(scope="session")
def flat_study(cache_dir):
    cfg = StudyConfig(profile="flat:d=1", N_list=(1, 2, 3, 4, 5, 6, 7))
    t0 = time.perf_counter()
    report = run_study(cfg, cache_dir=cache_dir)
    return report, time.perf_counter() - t0


@pytest.fixture(scope="session")
def cosine_study(cache_dir):
    cfg = StudyConfig()   # canonical cosine d=1, a=0.4 over N in {3,...,13}
    t0 = time.perf_counter()
    report = run_study(cfg, cache_dir=cache_dir)
    return report, time.perf_counter() - t0


@pytest.fixture(scope="session")
def shallow_study(cache_dir):
    # eigenfunction-convergence study: the H1 error against the limit mode
    # scales like ~37*d*eps (flat closed form), so a shallow wall is needed
    # for the error to drop under 0.1 within the N <= 15 mesh budget
    cfg = StudyConfig(profile="cosine:d=0.05,a=0.02",
                      N_list=(3, 5, 7, 9, 11, 13))
    t0 = time.perf_counter()
    report = run_study(cfg, cache_dir=cache_dir)
    return report, time.perf_counter() - t0


@pytest.fixture(scope="session")
def cosine_composites(cosine_profile):
    """Branch composites at beta = 0.5 for N in {3,5,7,9,11}, one bundle."""
    bundle = cell.solve_cell_bundle(cosine_profile, T=8.0,
                                    cells_per_half_period=16)
    out = {}
    for N in (3, 5, 7, 9, 11):
        out[N] = composite.composite_pair(cosine_profile,
                                          meshgen.EpsilonParam(N),
                                          beta=0.5, bundle=bundle)
    return out


@pytest.fixture(scope="session")
def cosine_residuals(cosine_composites):
    t0 = time.perf_counter()
    eps = []
    norms = {1: [], 2: []}
    for N, pair in sorted(cosine_composites.items()):
        eps.append(pair[0].eps.eps)
        for l in (1, 2):
            norms[l].append(composite.residual_norm(pair[l - 1]))
    return eps, norms, time.perf_counter() - t0
