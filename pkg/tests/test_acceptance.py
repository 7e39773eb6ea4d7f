"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run just this file with ``pytest -v -s tests/test_acceptance.py``; the verdict
lines are also printed when output is captured.
"""

import time

import numpy as np
import pytest
from oracles import ari_brute, nmi_brute, sinkhorn_oracle_run

from flowguide import autodiff as ad
from flowguide.cli import main
from flowguide.config import SEED_ENV, Config
from flowguide.datasets import make_dataset
from flowguide.metrics import ari, frechet_distance, nmi
from flowguide.nn import NetSpec, init_velocity_params, velocity
from flowguide.ot_guidance import SinkhornConfig, sinkhorn
from flowguide.paths import VE, VP, ConstantVelocity, interpolate, target_velocity
from flowguide.sampler import cfg_velocity, integrate
from flowguide.trainer import NET, init_state, loss_graph, prepare_step, run_training


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, detail

    return report


# 1 -----------------------------------------------------------------------------

def test_c1_sinkhorn_matches_fixed_point(verdict):
    rng = np.random.default_rng(0)
    cases = []
    for _ in range(50):
        k, b = int(rng.integers(1, 9)), int(rng.integers(1, 33))
        lam = float(rng.uniform(1.0, 50.0))
        # cosine-like scores, the regime the trainer feeds in
        cases.append((rng.uniform(-1.0, 1.0, (k, b)), lam))

    t0 = time.perf_counter()
    plans = [sinkhorn(s, SinkhornConfig(lam, 500)) for s, lam in cases]
    runtime = time.perf_counter() - t0

    worst = worst_row = worst_col = 0.0
    bad = unconverged = 0
    for (s, lam), p in zip(cases, plans):
        k, b = s.shape
        ref, residual, _ = sinkhorn_oracle_run(s, lam, tol=1e-12, max_iter=200_000)
        unconverged += residual >= 1e-12
        err = float(np.abs(p - ref).max())
        bad += err > 1e-8
        worst = max(worst, err)
        worst_row = max(worst_row, float(np.abs(p.sum(axis=1) - 1.0 / k).max()))
        worst_col = max(worst_col, float(np.abs(p.sum(axis=0) - 1.0 / b).max()))
    ok = bad == 0 and worst_row <= 1e-15 and worst_col <= 1e-6 and runtime < 5.0
    verdict(1, ok, f"{bad}/50 plans off by > 1e-8 (worst {worst:.2e}); row err {worst_row:.1e}, "
                   f"col err {worst_col:.1e}; oracle unconverged on {unconverged}; sinkhorn time {runtime:.2f}s")


# 2 -----------------------------------------------------------------------------

def test_c2_gradient_integrity(verdict):
    base = Config(width=16, hidden_layers=3, time_freqs=4, feature_dim=4, clusters=4, batch_size=8, total_iters=10)
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst, leaked = 0.0, 0
    for i in range(20):
        state = init_state(base.replace(seed=i))
        state.iteration = int(rng.integers(0, 10))
        x = rng.standard_normal((8, 2))
        draws = prepare_step(state, x, drop_mask=rng.random(8) < 0.3)
        worst = max(worst, ad.grad_check(lambda nodes: loss_graph(nodes, state, draws)[0], state.params))
        nodes = {k: ad.param(v, k) for k, v in state.params.items()}
        _, _, loss_sk = loss_graph(nodes, state, draws)
        if loss_sk is not None:
            grads = ad.backward(loss_sk)
            leaked += sum(int(np.count_nonzero(g)) for k, g in grads.items() if k.startswith(NET))
    runtime = time.perf_counter() - t0
    ok = worst < 1e-4 and leaked == 0 and runtime < 30.0
    verdict(2, ok, f"max rel err {worst:.1e}; nonzero L_SK grads on network {leaked}; {runtime:.1f}s")


# 3 -----------------------------------------------------------------------------

def test_c3_path_identities(verdict):
    rng = np.random.default_rng(3)
    x, z = rng.standard_normal((6, 2)), rng.standard_normal((6, 2))
    worst_fd, endpoints_ok = 0.0, True
    for path in (VP(), VE(), ConstantVelocity()):
        endpoints_ok &= np.array_equal(interpolate(path, x, z, 0.0), x)
        if isinstance(path, ConstantVelocity):
            endpoints_ok &= np.array_equal(interpolate(path, x, z, 1.0), z)
        for t in np.linspace(0.05, 0.95, 20):
            h = 1e-5
            fd = (interpolate(path, x, z, t + h) - interpolate(path, x, z, t - h)) / (2 * h)
            worst_fd = max(worst_fd, float(np.abs(fd - target_velocity(path, x, z, t)).max()))
    verdict(3, endpoints_ok and worst_fd < 1e-6, f"endpoints exact {endpoints_ok}; worst FD gap {worst_fd:.1e}")


# 4 -----------------------------------------------------------------------------

def test_c4_integrator_order(verdict):
    x0 = np.array([[1.0, -0.5]])
    t0 = time.perf_counter()
    slopes = {}
    for method in ("euler", "heun"):
        errs = [float(np.abs(integrate(lambda x, t: -x, x0, n, method)[0] - np.e * x0).max()) for n in (10, 20, 40, 80)]
        slopes[method] = -np.polyfit(np.log([10, 20, 40, 80]), np.log(errs), 1)[0]
    runtime = time.perf_counter() - t0
    ok = abs(slopes["euler"] - 1.0) <= 0.3 and abs(slopes["heun"] - 2.0) <= 0.3 and runtime < 5.0
    verdict(4, ok, f"euler slope {slopes['euler']:.3f}, heun slope {slopes['heun']:.3f}; {runtime:.3f}s")


# 5 -----------------------------------------------------------------------------

def test_c5_cfg_algebra(verdict):
    spec = NetSpec(data_dim=2, cond_dim=3, width=16, hidden_layers=3, time_freqs=4)
    rng = np.random.default_rng(5)
    identity, worst_affine = True, 0.0
    for seed in range(20):
        p = init_velocity_params(spec, np.random.default_rng(seed))
        x, c, null = rng.standard_normal((4, 2)), rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
        t = float(rng.uniform())
        v_c, v_n = velocity(p, spec, x, t, c), velocity(p, spec, x, t, null)
        identity &= cfg_velocity(p, spec, x, t, c, null, 0.0).tobytes() == v_c.tobytes()
        for g in (0.4, 1.0, 3.5):
            expected = (1 + g) * v_c - g * v_n
            worst_affine = max(worst_affine, float(np.abs(cfg_velocity(p, spec, x, t, c, null, g) - expected).max()))
    ok = identity and worst_affine == 0.0
    verdict(5, ok, f"g=0 bitwise {identity}; max deviation from (1+g)v_c - g v_null {worst_affine:.1e}")


# 6 -----------------------------------------------------------------------------

@pytest.mark.slow
def test_c6_desk_scale_guidance(verdict):
    data = make_dataset("ring8", 8192, seed=0)
    # only the final metrics are judged; evaluation draws from its own generators, so
    # logging less often leaves the training trajectory unchanged
    cfg = Config(clusters=8, total_iters=20000, batch_size=256, warmup=0.5, p_drop=0.15, guidance=0.4,
                 eval_interval=20000)
    t0 = time.perf_counter()
    guided = run_training(cfg.replace(mode="guided"), data)
    plain = run_training(cfg.replace(mode="unconditional"), data)
    runtime = time.perf_counter() - t0
    fg, fu = guided.final["frechet"], plain.final["frechet"]
    score = guided.final["nmi"]
    share = guided.final["histogram"] / guided.final["histogram"].sum()
    ok_a, ok_b = fg <= fu, score >= 0.5
    ok_c = share.max() <= 0.40 and share.min() >= 0.02
    verdict(6, ok_a and ok_b and ok_c and runtime < 900,
            f"(a) frechet guided {fg:.4f} vs unconditional {fu:.4f} {'ok' if ok_a else 'no'}; "
            f"(b) nmi {score:.3f} {'ok' if ok_b else 'no'}; "
            f"(c) shares {share.min():.3f}..{share.max():.3f} {'ok' if ok_c else 'no'}; {runtime:.0f}s on this host")


# 7 -----------------------------------------------------------------------------

def test_c7_warmup_schedule(verdict):
    cfg = Config(width=16, hidden_layers=3, time_freqs=4, feature_dim=4, clusters=4, batch_size=32,
                 total_iters=137, warmup=0.37, eval_interval=1, eval_samples=16, steps=2, method="euler")
    log = run_training(cfg, make_dataset("ring8", 256, seed=0)).log
    mismatches = [r["iter"] for r in log
                  if r["sk_weight"] != min(r["iter"] / (cfg.warmup * cfg.total_iters), 1.0)]
    verdict(7, len(log) == 137 and not mismatches, f"{len(log)} logged rows, {len(mismatches)} mismatches")


# 8 -----------------------------------------------------------------------------

def test_c8_metric_oracles(verdict):
    rng = np.random.default_rng(8)
    ari_exact, nmi_gap = True, 0.0
    for _ in range(100):
        n = int(rng.integers(2, 13))
        a, b = rng.integers(0, 5, n).tolist(), rng.integers(0, 5, n).tolist()
        ari_exact &= ari(a, b) == ari_brute(a, b)
        nmi_gap = max(nmi_gap, abs(nmi(a, b) - nmi_brute(a, b)))
    x = rng.standard_normal((200, 2))
    y = rng.standard_normal((150, 2)) @ np.array([[1.0, 0.4], [0.0, 2.0]]) + 0.5
    d = frechet_distance(x, y)
    props = (abs(frechet_distance(x, x)) < 1e-9 and abs(frechet_distance(y, x) - d) < 1e-9 * max(1, d)
             and abs(frechet_distance(3 * x, 3 * y) - 9 * d) < 1e-9 * max(1, d))
    # NMI is a ratio of sums of logs, so agreement is to rounding of the final ulps
    ok = ari_exact and nmi_gap <= 1e-12 and props
    verdict(8, ok, f"ari bitwise {ari_exact}; nmi max gap {nmi_gap:.1e}; frechet properties {props}")


# 9 -----------------------------------------------------------------------------

def test_c9_reproducibility(verdict, tmp_path, monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)
    cfg = tmp_path / "run.cfg"
    cfg.write_text('dataset = "ring8"\nn = 2048\nwidth = 64\ntotal_iters = 400\neval_interval = 100\n'
                   "eval_samples = 512\nsteps = 10\n")
    for name in ("a", "b"):
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
    same = {f: (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
            for f in ("metrics.csv", "final.ckpt")}
    verdict(9, all(same.values()), ", ".join(f"{k} identical {v}" for k, v in same.items()))
