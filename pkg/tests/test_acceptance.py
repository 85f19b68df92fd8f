"""Acceptance suite: one test per release criterion, each printing a
PASS line at its stated tolerance (run with -s to see them live).

The synthetic-data criteria use seeded generators so every run is
bit-reproducible.
"""

import contextlib
import json
import socket
import threading
import time

import numpy as np
import pytest

from lpmm.adaptor import (
    TrainConfig,
    adaptor_forward,
    base_pose_residual,
    compute_losses,
    deserialize_adaptor,
    init_adaptor,
    run_loss_ablation,
    serialize_adaptor,
    train_adaptor,
    zero_adaptor,
)
from lpmm.errors import DomainError, FormatError
from lpmm.landmarks import LandmarkSet, nme
from lpmm.model import (
    ParamVector,
    build_lpmm,
    deserialize_model,
    explained_variance,
    fit_params,
    nme_sweep,
    reconstruct,
    serialize_model,
)
from lpmm.poseedit import Blendshape, deserialize_blendshape, serialize_blendshape
from lpmm.surrogate import RasterConfig, make_surrogate

from conftest import synthetic_dataset
from gradcheck import fd_gradient_check
from test_landmarks import grid68

PCA_VARIANCES = [1.0, 0.5, 0.25, 0.1, 0.05]
PCA_SEED = 424242


@contextlib.contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name}")
        raise
    print(f"[PASS] {name}")


@pytest.fixture(scope="module")
def pca_setup():
    dataset, directions, mean = synthetic_dataset(
        500, PCA_VARIANCES, seed=PCA_SEED, return_directions=True
    )
    return dataset, directions, mean


def test_pca_correctness(pca_setup):
    with criterion("PCA correctness: 5-dim subspace recovery on 500 synthetic samples"):
        dataset, directions, _ = pca_setup
        t0 = time.perf_counter()
        model = build_lpmm(dataset)
        sv = np.linalg.svd(directions.T @ model.basis[:, :5], compute_uv=False)
        angles = np.arccos(np.clip(sv, -1.0, 1.0))
        assert angles.max() < 1e-4
        assert explained_variance(model, 5) == pytest.approx(1.0, abs=1e-9)
        assert time.perf_counter() - t0 < 5.0


def test_k_sweep_shape():
    with criterion("k-sweep: NME non-increasing, NME(5) <= 1.05 x NME(m) under noise"):
        t0 = time.perf_counter()
        noisy = synthetic_dataset(500, PCA_VARIANCES, seed=PCA_SEED, noise=0.002)
        # the model is truncated at the largest swept degree so the sweep's
        # tail is an honest error floor (a complete 136-column basis would
        # reconstruct the noise exactly and make any ratio test vacuous)
        model = build_lpmm(noisy, m=10)
        ks = [min(k, model.m) for k in [1, 2, 3, 5, 10, 136]]
        reports = nme_sweep(model, noisy, ks)
        means = [r.mean for r in reports]
        assert all(b <= a + 1e-15 for a, b in zip(means, means[1:]))
        nme_at_5 = means[ks.index(5)]
        nme_at_m = means[-1]
        assert nme_at_5 <= 1.05 * nme_at_m
        assert time.perf_counter() - t0 < 10.0


def test_reconstruction_round_trip(pca_setup):
    with criterion("round-trip: fit(reconstruct(p)) = p for 1000 random vectors"):
        dataset, _, _ = pca_setup
        model = build_lpmm(dataset)
        rng = np.random.default_rng(8)
        worst = 0.0
        for _ in range(1000):
            k = int(rng.integers(1, model.m + 1))
            p = ParamVector(rng.normal(0.0, 1.0, k))
            again = fit_params(model, reconstruct(model, p), k)
            worst = max(worst, float(np.max(np.abs(again.values - p.values))))
        assert worst < 1e-10


def test_nme_metric():
    with criterion("NME metric: hand-computed case exact, scale-invariant"):
        truth = grid68()
        truth[36] = [0.45, 0.40]
        truth[45] = [0.55, 0.40]  # inter-ocular 0.1
        pred = truth + [0.01, 0.0]
        value = nme(LandmarkSet(pred), LandmarkSet(truth))
        assert value == pytest.approx(0.1, abs=1e-12)
        rng = np.random.default_rng(17)
        for _ in range(100):
            t = grid68() + rng.normal(0, 0.01, (68, 2))
            p = t + rng.normal(0, 0.02, (68, 2))
            s = float(rng.uniform(0.05, 20.0))
            a = nme(LandmarkSet(p), LandmarkSet(t))
            b = nme(LandmarkSet(p * s), LandmarkSet(t * s))
            assert b == pytest.approx(a, rel=1e-12)


def test_gradient_suite():
    with criterion("gradients: 50 random configs vs central differences (kink-excluded)"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(2024)
        dataset = synthetic_dataset(30, [0.004, 0.002, 0.001, 0.0005, 0.0002], seed=55)
        model = build_lpmm(dataset)
        sets = dataset.landmark_sets()
        worst_overall = 0.0
        total_checked = total_excluded = 0
        for i in range(50):
            k = int(rng.integers(1, 6))
            w = int(rng.integers(1, 7))
            h = int(rng.integers(8, 17))
            wd = int(rng.integers(8, 17))
            sigma = float(rng.uniform(0.02, 0.08))
            stack = make_surrogate(int(rng.integers(1 << 30)), w, 68, RasterConfig(h, wd, sigma), model.mean)
            cfg = TrainConfig(
                k=k, steps=1, batch_size=4,
                loss_variant="rgb" if i % 2 == 0 else "latent",
                pose_reg_enabled=(i % 3 != 0),
            )
            net = init_adaptor(k, w, rng.normal(0, 0.05, w), seed=int(rng.integers(1 << 30)))
            batch_idx = rng.choice(len(sets), size=int(rng.integers(1, 4)), replace=False)
            batch = [sets[j] for j in batch_idx]
            worst, excluded, checked = fd_gradient_check(net, stack, model, batch, cfg)
            worst_overall = max(worst_overall, worst)
            total_checked += checked
            total_excluded += excluded
        elapsed = time.perf_counter() - t0
        assert worst_overall < 1e-4
        assert total_excluded < total_checked / 4
        assert elapsed < 60.0


REFERENCE_VARIANCES = [0.1, 0.05, 0.025, 0.01, 0.005, 0.005, 0.005, 0.005]
REFERENCE_SEED = 777


@pytest.fixture(scope="module")
def reference_setup():
    dataset = synthetic_dataset(500, REFERENCE_VARIANCES, seed=REFERENCE_SEED)
    model = build_lpmm(dataset)
    stack = make_surrogate(123, 16, 68, RasterConfig(64, 64, 0.02), model.mean)
    return dataset, model, stack


def affine_oracle_rgb_loss(model, stack, dataset, k):
    """Loss of the exact linear parameter-to-latent map (the global optimum
    for rank-k data); realized through shifted ELU layers."""
    from test_adaptor import affine_oracle_net

    net = affine_oracle_net(model, stack, k)
    cfg = TrainConfig(k=k, steps=1, pose_reg_enabled=False)
    batch = dataset.landmark_sets()[:64]
    return compute_losses(net, stack, model, batch, cfg).rgb


def test_adaptor_convergence(reference_setup):
    with criterion("adaptor convergence: reference run reaches <5% of initial rgb loss"):
        dataset, model, stack = reference_setup
        cfg = TrainConfig(k=8, steps=2000, seed=0, learning_rate=1e-4,
                          lambda_rgb=1.0, lambda_pose_reg=1.0, batch_size=32)
        t0 = time.perf_counter()
        net1, rep1 = train_adaptor(model, stack, dataset, cfg)
        net2, rep2 = train_adaptor(model, stack, dataset, cfg)
        elapsed = time.perf_counter() - t0
        initial = rep1.loss_curve[0].rgb
        final = rep1.loss_curve[-1].rgb
        assert final < 0.05 * initial
        assert base_pose_residual(net1, stack, model) < 0.01
        # bit-identical reruns
        assert [lb.total for lb in rep1.loss_curve] == [lb.total for lb in rep2.loss_curve]
        for a, b in zip(net1.weights, net2.weights):
            assert np.array_equal(a, b)
        # the analytic optimum the training chases is effectively zero
        assert affine_oracle_rgb_loss(model, stack, dataset, 8) < 1e-8
        assert elapsed < 600.0


def test_ablation_harness(reference_setup):
    with criterion("ablation: {rgb,latent} x {pose-reg on,off} all complete; bound holds"):
        dataset, model, _ = reference_setup
        stack = make_surrogate(123, 12, 68, RasterConfig(32, 32, 0.02), model.mean)
        base_cfg = TrainConfig(k=5, steps=400, seed=0, batch_size=32)
        report = run_loss_ablation(model, stack, dataset, base_cfg)
        combos = {(r["loss_variant"], r["pose_reg_enabled"]) for r in report["runs"]}
        assert combos == {("rgb", True), ("rgb", False), ("latent", True), ("latent", False)}
        for run in report["runs"]:
            assert run["steps_run"] == 400
            assert np.isfinite(run["final"]["total"])
            if run["pose_reg_enabled"]:
                assert run["base_pose_residual"] < 0.01


def test_base_pose_properties(reference_setup):
    with criterion("base pose: reconstruct(0) = mean exactly; zero net maps to mean latent"):
        _, model, stack = reference_setup
        out = reconstruct(model, ParamVector.zeros(model.m))
        assert np.array_equal(out.vector, model.mean)
        rng = np.random.default_rng(4)
        v_bar = rng.normal(0, 0.2, stack.w)
        net = zero_adaptor(8, stack.w, v_bar)
        for _ in range(20):
            p = ParamVector(rng.normal(0, 2.0, 8))
            assert np.array_equal(adaptor_forward(net, p), v_bar)


def test_file_formats(reference_setup):
    with criterion("formats: field-exact round-trips; tampering rejected with stable codes"):
        dataset, model, stack = reference_setup
        # model
        again = deserialize_model(serialize_model(model))
        assert np.array_equal(model.basis, again.basis)
        assert np.array_equal(model.mean, again.mean)
        assert model.dataset_fingerprint == again.dataset_fingerprint
        obj = json.loads(serialize_model(model))
        obj["basis"][2] = [x * 2.0 for x in obj["basis"][2]]
        with pytest.raises(FormatError) as exc:
            deserialize_model(json.dumps(obj).encode())
        assert exc.value.code == "basis_not_orthonormal"
        obj = json.loads(serialize_model(model))
        obj["version"] = 9
        with pytest.raises(FormatError) as exc:
            deserialize_model(json.dumps(obj).encode())
        assert exc.value.code == "version_mismatch"

        # blendshape
        bs = Blendshape("probe", ParamVector([0.5, -0.25]), description="x")
        data = serialize_blendshape(bs, model.dataset_fingerprint)
        back = deserialize_blendshape(data, model.dataset_fingerprint)
        assert np.array_equal(back.offset.values, bs.offset.values)
        with pytest.raises(DomainError) as exc:
            deserialize_blendshape(data, "another-model")
        assert exc.value.code == "fingerprint_mismatch"

        # adaptor
        cfg = TrainConfig(k=3, steps=0, seed=1)
        net, _ = train_adaptor(model, stack, dataset, cfg)
        raw = serialize_adaptor(net, cfg, stack.seed)
        net2, meta = deserialize_adaptor(raw)
        for a, b in zip(net.weights, net2.weights):
            assert np.array_equal(a, b)
        assert np.array_equal(net.mean_latent, net2.mean_latent)
        assert meta["surrogate_seed"] == stack.seed
        tampered = json.loads(raw)
        tampered["widths"] = [3, 7, 12, 16]
        with pytest.raises(FormatError) as exc:
            deserialize_adaptor(json.dumps(tampered).encode())
        assert exc.value.code == "bad_width_chain"


@contextlib.contextmanager
def live_server(state_dir):
    import httpx
    import uvicorn

    from lpmm.service import create_app

    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    config = uvicorn.Config(create_app(state_dir), host="127.0.0.1", port=port, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    try:
        with httpx.Client(base_url=f"http://127.0.0.1:{port}", timeout=30.0) as client:
            for _ in range(400):
                try:
                    client.get("/api/v1/model")
                    break
                except httpx.TransportError:
                    time.sleep(0.025)
            else:
                raise RuntimeError("server did not come up")
            yield client
    finally:
        server.should_exit = True
        thread.join(timeout=10)


def test_service_contract(tmp_path):
    with criterion("service: 404 no_model, base-pose reconstruct, 409 job_running (live HTTP)"):
        from lpmm.landmarks import normalize_dataset, parse_landmark_records, serialize_landmark_records

        dataset = synthetic_dataset(30, [0.004, 0.002], seed=99)
        records = [json.loads(line) for line in serialize_landmark_records(dataset).decode().splitlines()]
        expected_model = build_lpmm(normalize_dataset(parse_landmark_records(serialize_landmark_records(dataset))))

        with live_server(tmp_path / "state") as client:
            resp = client.get("/api/v1/model")
            assert resp.status_code == 404
            assert resp.json()["error"] == "no_model"

            assert client.post("/api/v1/model/build", json={"dataset": records, "m": None}).status_code == 200
            resp = client.post("/api/v1/reconstruct", json={"params": [0.0, 0.0]})
            assert resp.status_code == 200
            points = np.asarray(resp.json()["points"]).reshape(-1)
            assert np.array_equal(points, expected_model.mean)

            assert client.post(
                "/api/v1/surrogate",
                json={"seed": 3, "w": 4, "raster": {"h": 16, "w": 16, "sigma": 0.04}},
            ).status_code == 200
            first = client.post("/api/v1/adaptor/train", json={"k": 2, "steps": 600, "batch_size": 2})
            assert first.status_code == 200
            second = client.post("/api/v1/adaptor/train", json={"k": 2, "steps": 5})
            assert second.status_code == 409
            assert second.json()["error"] == "job_running"
            deadline = time.time() + 60
            while time.time() < deadline:
                if client.get("/api/v1/adaptor/status").json()["state"] in ("done", "failed"):
                    break
                time.sleep(0.05)
            assert client.get("/api/v1/adaptor/status").json()["state"] == "done"
