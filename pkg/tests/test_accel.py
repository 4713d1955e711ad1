import os
import subprocess
import sys

import networkx as nx
import numpy as np
import pytest

from stratnet import kernels
from stratnet.formation import FormationParams, simulate_network
from stratnet.jml import FitGeometry, JmlSettings, jml_estimate
from stratnet.montecarlo import McDesign, build_design


@pytest.mark.parametrize("directed", [False, True])
def test_edge_connectivity_backends_agree(rng, directed):
    for _ in range(30):
        n = int(rng.integers(2, 25))
        a = (rng.random((n, n)) < rng.uniform(0.1, 0.9)).astype(np.bool_)
        np.fill_diagonal(a, False)
        if not directed:
            a = np.triu(a, 1)
            a = a | a.T
        g = nx.from_numpy_array(a.astype(int), create_using=nx.DiGraph if directed else nx.Graph)
        ref = nx.edge_connectivity(g)
        assert kernels.edge_connectivity_numba(a, directed) == ref
        assert kernels.edge_connectivity_numpy(a, directed) == ref


def test_triad_cross_sum_backends_agree():
    n = 60
    cov, A = build_design(McDesign(n=n, c_n_rule="loglog"))
    net = simulate_network(n, cov, FormationParams(beta=[1.0], A=A), seed=2, directed=True)
    fit = jml_estimate(net, cov, settings=JmlSettings(family="probit", drop_degenerate=True))
    g = FitGeometry.from_fit(fit, net, cov)
    args = (g.dp, g.p, g.x, g.Ctt, g.Ctf, g.Cff, g.sidx, g.ridx)
    a = kernels.triad_cross_sum_numba(*[np.ascontiguousarray(v) for v in args])
    b = kernels.triad_cross_sum_numpy(*args)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


def test_env_flag_selects_numpy():
    code = "from stratnet import _accel; print(_accel.backend())"
    env = dict(os.environ, STRATNET_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "numpy"
    env["STRATNET_DISABLE_NUMBA"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "numba"


def test_fallback_results_identical(tmp_path):
    # a full fit and test under both back ends gives the same statistic
    code = (
        "import numpy as np\n"
        "from stratnet.formation import FormationParams, simulate_network\n"
        "from stratnet.jml import JmlSettings, jml_estimate\n"
        "from stratnet.montecarlo import McDesign, build_design\n"
        "from stratnet.graph import summary_stats\n"
        "from stratnet.transitivity import transitivity_test\n"
        "cov, A = build_design(McDesign(n=50))\n"
        "net = simulate_network(50, cov, FormationParams(beta=[1.0], A=A), seed=1, directed=True)\n"
        "fit = jml_estimate(net, cov, settings=JmlSettings(family='probit', drop_degenerate=True))\n"
        "print(repr(transitivity_test(net, cov, fit).z_stat), summary_stats(net).min_cut)\n"
    )
    outs = []
    for flag in ("0", "1"):
        env = dict(os.environ, STRATNET_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
        assert res.returncode == 0, res.stderr
        z, cut = res.stdout.split()
        outs.append((float(z), float(cut)))
    assert outs[0][1] == outs[1][1]
    assert outs[0][0] == pytest.approx(outs[1][0], rel=1e-9)
