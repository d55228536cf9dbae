"""Shared fixtures: grids, the eigenbasis, and the expensive reference runs.

The trapped, escape and bump pipelines are built once per session; both
the module tests and the acceptance suite read from them.
"""

import numpy as np
import pytest
from types import SimpleNamespace

from sswlab import wspace, stationary, spectral, linop, evolve, modulation, labcli


@pytest.fixture(scope="session")
def grid64():
    return wspace.build_grid(64, 3.0)


@pytest.fixture(scope="session")
def grid128():
    return wspace.build_grid(128, 3.0)


@pytest.fixture(scope="session")
def basis16(grid128):
    return spectral.build_eigenbasis(3.0, 16, grid128)


@pytest.fixture(scope="session")
def pilot():
    return modulation.load_pilot_constants()


def complex_states(grid, count, seed):
    """Complex random states: pairs of smooth real states as re/im parts."""
    fields = spectral.random_fields(grid, 2 * count, seed=seed)
    return [wspace.StateField(grid,
                              fields[2 * i].first + 1j * fields[2 * i + 1].first,
                              fields[2 * i].second + 1j * fields[2 * i + 1].second)
            for i in range(count)]


def seeded_soliton_state(grid, d_star, theta_star, epsilon_star, seed):
    """kappa(d*) rotated by theta* plus a mode-cleared perturbation."""
    q = labcli._seed_perturbation(grid, d_star, epsilon_star, seed)
    kap = stationary.kappa_values(grid.p, d_star, grid.nodes)
    ph = np.exp(1j * theta_star)
    return wspace.StateField(grid, ph * (kap + q.first), ph * q.second)


def tracked_trapping(grid, d_star, theta_star, epsilon_star, seed, s_span,
                     ds_out=0.05):
    """Run, track and fit one trapping experiment; returns a bundle dict."""
    initial = seeded_soliton_state(grid, d_star, theta_star, epsilon_star, seed)
    run = evolve.run_selfsimilar(initial, s_span, grid.p, ds_out=ds_out)
    records, aux = modulation.track_run(run, d_star, theta_star)
    nrm = np.array([r.normH for r in records])
    cut = int(np.argmin(nrm)) + 1
    est = modulation.fit_decay(records[:cut])
    return {"run": run, "records": records, "aux": aux, "cut": cut,
            "est": est, "d_star": d_star, "theta_star": theta_star,
            "epsilon_star": epsilon_star}


@pytest.fixture(scope="session")
def trapped(grid64):
    """The reference trapped run: eps* = 1e-3 at d* = 0, theta* = 0.4."""
    return tracked_trapping(grid64, 0.0, 0.4, 1e-3, 0, (0.0, 6.0))


@pytest.fixture(scope="session")
def escape(grid64):
    """The expanding closed-form seed: d = 0.2, mu = 1e-3 over s in [0, 11]."""
    initial = evolve.explicit_degenerate_solution(0.2, 1e-3, grid64, 0.0)
    run = evolve.run_selfsimilar(initial, (0.0, 11.0), 3.0, ds_out=0.05)
    records, aux = modulation.track_run(run, 0.2, 0.0)
    est = modulation.fit_decay(records)
    return {"run": run, "records": records, "aux": aux, "est": est}


@pytest.fixture(scope="session")
def bump(grid64):
    """Physical-space bump blow-up, transformed and tracked.

    Tracking starts at the first frame whose modulation remainder is
    comfortably inside the basin; earlier frames are still transforming
    toward the soliton and are outside the chart.
    """
    m = 256
    x = np.linspace(-2.0, 2.0, m)
    amp = 2.0 * stationary.kappa0(3.0)
    u0 = amp * np.exp(-(x / 0.7) ** 2)
    run = evolve.run_physical(u0, u0.copy(), x, {"x0": 0.0, "delta0": 0.5},
                              3.0, t_max=4.0)
    frames = evolve.to_selfsimilar(run, 0.0, run.That, grid=grid64)
    start = d0 = th0 = None
    for i, f in enumerate(frames):
        cls = stationary.classify_stationary(
            wspace.ScalarField(grid64, f.first), tol=0.5)
        if cls.kind != "soliton":
            continue
        try:
            params, q = modulation.modulate(f, cls.params.d, cls.params.theta)
        except RuntimeError:
            continue
        if wspace.norms(q)["H"] < 0.25:
            start, d0, th0 = i, params.d, params.theta
            break
    records = aux = None
    if start is not None:
        sub = frames[start:]
        shim = SimpleNamespace(grid=grid64, p=3.0,
                               s_samples=np.array([f.meta["s"] for f in sub]),
                               states=sub)
        records, aux = modulation.track_run(shim, d0, th0)
    return {"run": run, "frames": frames, "start": start,
            "records": records, "aux": aux}


@pytest.fixture(scope="session")
def acceptance_runs():
    """Registry of every self-similar run the acceptance suite produced."""
    return []
