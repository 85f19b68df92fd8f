"""Throwaway smoke checks for core math (deleted before finishing)."""
import time

import numpy as np

from lpmm.landmarks import LandmarkDataset, LandmarkRecord, LandmarkSet
from lpmm.model import build_lpmm, fit_params, reconstruct, explained_variance
from lpmm.surrogate import RasterConfig, make_surrogate, render_raster, render_jacobian, encode_landmarks
from lpmm.adaptor import (
    TrainConfig, compute_gradients, compute_losses, l1_loss_arguments,
    train_adaptor, base_pose_residual, init_adaptor,
)


def synth_face_mean(n=68, seed=1):
    # crude oval-ish arrangement inside the unit frame; exact shape irrelevant
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    pts = 0.5 + 0.28 * np.column_stack([np.cos(t), np.sin(t)])
    pts += rng.uniform(-0.02, 0.02, size=pts.shape)
    return pts.reshape(-1)


def synth_dataset(n_samples, variances, seed=0, n=68, noise=0.0):
    rng = np.random.default_rng(seed)
    dim = 2 * n
    mean = synth_face_mean(n)
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    directions = q[:, : len(variances)]
    coeffs = rng.standard_normal((n_samples, len(variances))) * np.sqrt(variances)
    X = mean + coeffs @ directions.T
    if noise:
        X = X + rng.normal(0, noise, X.shape)
    recs = [
        LandmarkRecord(f"id{i%7}", f"f{i}", LandmarkSet(X[i].reshape(-1, 2)))
        for i in range(n_samples)
    ]
    return LandmarkDataset(recs), directions, mean


# --- PCA recovery ---
t0 = time.perf_counter()
ds, U, mean_true = synth_dataset(500, [1.0, 0.5, 0.25, 0.1, 0.05], seed=42)
m = build_lpmm(ds)
P_oracle = U @ U.T
B5 = m.basis[:, :5]
P_model = B5 @ B5.T
print("PCA: projector max-abs err:", np.max(np.abs(P_oracle - P_model)))
sv = np.linalg.svd(U.T @ B5, compute_uv=False)
angles = np.arccos(np.clip(sv, -1, 1))
print("PCA: principal angles max:", angles.max())
print("PCA: explained_variance(5):", explained_variance(m, 5))
print("PCA: build time:", time.perf_counter() - t0)

# --- render jacobian FD ---
stack = make_surrogate(7, 16, 68, RasterConfig(32, 32, 0.02), m.mean)
rng = np.random.default_rng(3)
v = rng.normal(0, 0.3, 16)
J = render_jacobian(stack, v)
U_cot = rng.normal(0, 1, (32, 32))
g = J.vjp(U_cot)
h = 1e-5
fd = np.zeros(16)
for i in range(16):
    vp, vm = v.copy(), v.copy()
    vp[i] += h
    vm[i] -= h
    fd[i] = (np.sum(U_cot * render_raster(stack, vp)) - np.sum(U_cot * render_raster(stack, vm))) / (2 * h)
rel = np.abs(g - fd) / np.maximum(np.abs(fd), 1e-12)
print("render vjp max rel err:", rel.max())
# jvp consistency
dv = rng.normal(0, 1, 16)
lhs = np.sum(U_cot * J.jvp(dv))
rhs = np.dot(g, dv)
print("jvp/vjp consistency:", abs(lhs - rhs) / abs(rhs))

# --- adaptor gradient FD on small config ---
ds_s, _, _ = synth_dataset(20, [0.5, 0.2, 0.1], seed=5, n=8)
model_s = build_lpmm(ds_s)
stack_s = make_surrogate(11, 4, 8, RasterConfig(8, 8, 0.05), model_s.mean)
cfg = TrainConfig(k=3, steps=1, seed=0, batch_size=4)
batch = [ds_s.records[i].landmarks for i in range(3)]
lat = np.stack([encode_landmarks(stack_s, b) for b in batch])
net = init_adaptor(3, 4, lat.mean(axis=0), seed=2)
g = compute_gradients(net, stack_s, model_s, batch, cfg)
args = l1_loss_arguments(net, stack_s, model_s, batch, cfg)
print("min |data arg|:", np.min(np.abs(args["data"])), "min |pose arg|:", np.min(np.abs(args.get("pose", np.array([1.0])))))

def loss_at(net2):
    return compute_losses(net2, stack_s, model_s, batch, cfg).total

from lpmm.adaptor import AdaptorNet
h = 1e-6
worst = 0.0
for li in range(3):
    W = net.weights[li]
    for idx in np.ndindex(*W.shape):
        Wp = [w.copy() for w in net.weights]
        Wm = [w.copy() for w in net.weights]
        Wp[li][idx] += h
        Wm[li][idx] -= h
        np_ = AdaptorNet(tuple(Wp), net.biases, net.mean_latent)
        nm_ = AdaptorNet(tuple(Wm), net.biases, net.mean_latent)
        fd = (loss_at(np_) - loss_at(nm_)) / (2 * h)
        an = g.weights[li][idx]
        rel = abs(an - fd) / max(abs(an), abs(fd), 1e-6)
        worst = max(worst, rel)
print("adaptor grad FD worst rel err (weights):", worst)

# --- convergence probe (reduced) ---
ds8, _, _ = synth_dataset(500, [1.0, 0.5, 0.25, 0.1, 0.05, 0.05, 0.05, 0.05], seed=10)
model8 = build_lpmm(ds8)
stack8 = make_surrogate(123, 16, 68, RasterConfig(64, 64, 0.02), model8.mean)
cfg8 = TrainConfig(k=8, steps=300, seed=0)
t0 = time.perf_counter()
net8, rep = train_adaptor(model8, stack8, ds8, cfg8)
dt = time.perf_counter() - t0
print(f"train 300 steps: {dt:.1f}s -> per-step {dt/300*1000:.1f}ms; est 2000 steps {dt/300*2000:.0f}s")
print("rgb curve: first", rep.loss_curve[0].rgb, "last", rep.loss_curve[-1].rgb,
      "ratio", rep.loss_curve[-1].rgb / rep.loss_curve[0].rgb)
print("pose residual:", base_pose_residual(net8, stack8, model8))
