"""Parameter-to-latent adaptor: a 3-layer ELU MLP with a residual head.

The net maps rig parameters p (degree k) to a latent pose vector as
v_hat = mean_latent + d(p), and is trained so the surrogate renders of
v_hat match the renders of the encoder's own latent for the same face.
Gradients are hand-derived; the optimizer is Adam.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import DomainError, FormatError, TrainingDivergedError
from .landmarks import LandmarkDataset, LandmarkSet
from .model import LpmmModel, ParamVector, fit_params
from .poseedit import Blendshape, apply_blendshapes
from .surrogate import (
    SurrogateStack,
    decode_latent,
    decode_points_batch,
    encode_batch,
    encode_landmarks,
    render_points,
    render_points_vjp,
)

ADAPTOR_FORMAT = "lpmm-adaptor"
ADAPTOR_VERSION = 1

LOSS_VARIANTS = ("rgb", "latent")


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.expm1(x))


def elu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, np.exp(x))


@dataclass(frozen=True, eq=False)
class AdaptorNet:
    """Width chain (k, 2k, 4k, w); ELU on the two hidden layers, linear head."""

    weights: tuple[np.ndarray, ...]  # (k,2k), (2k,4k), (4k,w)
    biases: tuple[np.ndarray, ...]   # (2k,), (4k,), (w,)
    mean_latent: np.ndarray          # (w,)

    def __post_init__(self):
        weights = tuple(np.asarray(w, dtype=np.float64) for w in self.weights)
        biases = tuple(np.asarray(b, dtype=np.float64) for b in self.biases)
        mean_latent = np.asarray(self.mean_latent, dtype=np.float64)
        if len(weights) != 3 or len(biases) != 3:
            raise FormatError("adaptor must have exactly 3 layers", code="bad_width_chain")
        k = weights[0].shape[0]
        w_out = weights[2].shape[1]
        expected = [(k, 2 * k), (2 * k, 4 * k), (4 * k, w_out)]
        for i, (wm, bias, shape) in enumerate(zip(weights, biases, expected)):
            if wm.shape != shape or bias.shape != (shape[1],):
                raise FormatError(
                    f"layer {i} shapes {wm.shape}/{bias.shape} violate width chain "
                    f"(k, 2k, 4k, w)",
                    code="bad_width_chain",
                )
        if mean_latent.shape != (w_out,):
            raise FormatError("mean_latent dimension does not match output", code="bad_width_chain")
        for arr in (*weights, *biases, mean_latent):
            if not np.all(np.isfinite(arr)):
                raise FormatError("non-finite adaptor weight", code="nonfinite_weight")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)
        object.__setattr__(self, "mean_latent", mean_latent)

    @property
    def k(self) -> int:
        return self.weights[0].shape[0]

    @property
    def w(self) -> int:
        return self.weights[2].shape[1]

    @property
    def widths(self) -> tuple[int, int, int, int]:
        return (self.k, 2 * self.k, 4 * self.k, self.w)


@dataclass(frozen=True)
class TrainConfig:
    k: int
    steps: int
    seed: int = 0
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    lambda_rgb: float = 1.0
    lambda_pose_reg: float = 1.0
    batch_size: int = 32
    loss_variant: str = "rgb"
    pose_reg_enabled: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise DomainError("k must be >= 1", code="k_out_of_range")
        if self.steps < 0:
            raise DomainError("steps must be >= 0", code="bad_train_config")
        if not self.learning_rate > 0:
            raise DomainError("learning rate must be positive", code="bad_train_config")
        if self.batch_size < 1:
            raise DomainError("batch size must be >= 1", code="bad_train_config")
        if self.loss_variant not in LOSS_VARIANTS:
            raise DomainError(f"unknown loss variant {self.loss_variant!r}", code="bad_train_config")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.epsilon > 0):
            raise DomainError("bad Adam hyperparameters", code="bad_train_config")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LossBreakdown:
    rgb: float
    pose_reg: float
    total: float

    @classmethod
    def combine(cls, rgb: float, pose_reg: float, cfg: TrainConfig) -> "LossBreakdown":
        return cls(rgb=rgb, pose_reg=pose_reg, total=cfg.lambda_rgb * rgb + cfg.lambda_pose_reg * pose_reg)

    def as_dict(self) -> dict:
        return {"rgb": self.rgb, "pose_reg": self.pose_reg, "total": self.total}


@dataclass(frozen=True, eq=False)
class AdaptorGradients:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]


def init_adaptor(k: int, w: int, v_bar, seed: int) -> AdaptorNet:
    """Uniform fan-in init: U(-sqrt(1/fan_in), +sqrt(1/fan_in)), zero biases."""
    if k < 1 or w < 1:
        raise DomainError("k and w must be >= 1", code="k_out_of_range")
    rng = np.random.default_rng(seed)
    dims = [k, 2 * k, 4 * k, w]
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(1.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return AdaptorNet(weights=tuple(weights), biases=tuple(biases), mean_latent=np.asarray(v_bar, dtype=np.float64))


def zero_adaptor(k: int, w: int, v_bar) -> AdaptorNet:
    """All-zero weights: the forward pass returns mean_latent for every input."""
    dims = [k, 2 * k, 4 * k, w]
    weights = tuple(np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:]))
    biases = tuple(np.zeros(b) for b in dims[1:])
    return AdaptorNet(weights=weights, biases=biases, mean_latent=np.asarray(v_bar, dtype=np.float64))


def _forward_batch(net: AdaptorNet, params: np.ndarray):
    """Forward pass on (B, k) inputs; returns latents plus the layer cache."""
    z1 = params @ net.weights[0] + net.biases[0]
    h1 = elu(z1)
    z2 = h1 @ net.weights[1] + net.biases[1]
    h2 = elu(z2)
    d = h2 @ net.weights[2] + net.biases[2]
    return net.mean_latent + d, (params, z1, h1, z2, h2, d)


def adaptor_forward(net: AdaptorNet, p: ParamVector) -> np.ndarray:
    """Latent pose vector mean_latent + d(p)."""
    if p.k != net.k:
        raise DomainError(f"parameter degree {p.k} does not match adaptor k={net.k}", code="degree_mismatch")
    v_hat, _ = _forward_batch(net, p.values[None])
    return v_hat[0]


def map_params_to_latent(net: AdaptorNet, p: ParamVector) -> np.ndarray:
    """Inference alias of adaptor_forward."""
    return adaptor_forward(net, p)


def _backprop(net: AdaptorNet, cache, d_out: np.ndarray) -> AdaptorGradients:
    """Gradients of sum(d_out * output) w.r.t. all weights and biases."""
    params, z1, h1, z2, h2, _ = cache
    d_w3 = h2.T @ d_out
    d_b3 = d_out.sum(axis=0)
    d_h2 = d_out @ net.weights[2].T
    d_z2 = d_h2 * elu_grad(z2)
    d_w2 = h1.T @ d_z2
    d_b2 = d_z2.sum(axis=0)
    d_h1 = d_z2 @ net.weights[1].T
    d_z1 = d_h1 * elu_grad(z1)
    d_w1 = params.T @ d_z1
    d_b1 = d_z1.sum(axis=0)
    return AdaptorGradients(weights=(d_w1, d_w2, d_w3), biases=(d_b1, d_b2, d_b3))


def _accumulate(a: AdaptorGradients, b: AdaptorGradients) -> AdaptorGradients:
    return AdaptorGradients(
        weights=tuple(x + y for x, y in zip(a.weights, b.weights)),
        biases=tuple(x + y for x, y in zip(a.biases, b.biases)),
    )


def _fit_params_batch(model: LpmmModel, vectors: np.ndarray, k: int) -> np.ndarray:
    return (vectors - model.mean) @ model.basis[:, :k]


def _base_params(net: AdaptorNet, stack: SurrogateStack, model: LpmmModel) -> ParamVector:
    """Parameters of the mean-latent face: fit(decode(mean_latent))."""
    base_lms = decode_latent(stack, net.mean_latent)
    return fit_params(model, base_lms, net.k)


def _batch_terms(net, stack, model, batch_vectors, cfg, target_rasters=None, target_latents=None):
    """Shared forward computation for losses/gradients on stacked vectors."""
    params = _fit_params_batch(model, batch_vectors, net.k)
    if target_latents is None:
        target_latents = encode_batch(stack, batch_vectors)
    v_hat, cache = _forward_batch(net, params)
    if cfg.loss_variant == "rgb":
        points_hat = decode_points_batch(stack, v_hat)
        rasters_hat = render_points(points_hat, stack.raster)
        if target_rasters is None:
            target_rasters = render_points(decode_points_batch(stack, target_latents), stack.raster)
        data_args = rasters_hat - target_rasters
        extra = (points_hat,)
    else:
        data_args = v_hat - target_latents
        extra = ()
    return params, v_hat, cache, data_args, extra


def _pose_args(net: AdaptorNet, stack: SurrogateStack, model: LpmmModel):
    p_base = _base_params(net, stack, model)
    _, cache = _forward_batch(net, p_base.values[None])
    return cache[5][0], cache  # residual d at the base parameters


def compute_losses(net: AdaptorNet, stack: SurrogateStack, model: LpmmModel,
                   batch: list[LandmarkSet], cfg: TrainConfig) -> LossBreakdown:
    """Data term (image-space or latent-space l1) plus the base-pose
    regularizer; total is the exact weighted sum."""
    if not batch:
        raise DomainError("batch must be non-empty", code="empty_batch")
    vectors = np.stack([lms.vector for lms in batch])
    _, _, _, data_args, _ = _batch_terms(net, stack, model, vectors, cfg)
    rgb = float(np.mean(np.abs(data_args)))
    pose = float(np.mean(np.abs(_pose_args(net, stack, model)[0]))) if cfg.pose_reg_enabled else 0.0
    return LossBreakdown.combine(rgb, pose, cfg)


def l1_loss_arguments(net: AdaptorNet, stack: SurrogateStack, model: LpmmModel,
                      batch: list[LandmarkSet], cfg: TrainConfig) -> dict[str, np.ndarray]:
    """Raw arguments of every l1 term (diagnostic; used by gradient checks
    to detect subgradient kinks)."""
    vectors = np.stack([lms.vector for lms in batch])
    _, _, _, data_args, _ = _batch_terms(net, stack, model, vectors, cfg)
    out = {"data": data_args}
    if cfg.pose_reg_enabled:
        out["pose"] = _pose_args(net, stack, model)[0]
    return out


def _losses_and_gradients(net, stack, model, vectors, cfg, target_rasters=None, target_latents=None):
    params, v_hat, cache, data_args, extra = _batch_terms(
        net, stack, model, vectors, cfg, target_rasters, target_latents
    )
    n_batch = vectors.shape[0]
    rgb = float(np.mean(np.abs(data_args)))

    if cfg.loss_variant == "rgb":
        (points_hat,) = extra
        cot = cfg.lambda_rgb * np.sign(data_args) / data_args.size
        d_points = render_points_vjp(points_hat, stack.raster, cot)
        d_vec = d_points.reshape(n_batch, -1)
        d_vhat = d_vec @ stack.encode_matrix.T
    else:
        d_vhat = cfg.lambda_rgb * np.sign(data_args) / data_args.size
    grads = _backprop(net, cache, d_vhat)

    pose = 0.0
    if cfg.pose_reg_enabled:
        d_base, base_cache = _pose_args(net, stack, model)
        pose = float(np.mean(np.abs(d_base)))
        d_out = cfg.lambda_pose_reg * np.sign(d_base)[None] / d_base.size
        grads = _accumulate(grads, _backprop(net, base_cache, d_out))

    return grads, LossBreakdown.combine(rgb, pose, cfg)


def compute_gradients(net: AdaptorNet, stack: SurrogateStack, model: LpmmModel,
                      batch: list[LandmarkSet], cfg: TrainConfig) -> AdaptorGradients:
    """Exact subgradients of the total loss for every weight and bias
    (sign(0) = 0 at l1 kinks)."""
    if not batch:
        raise DomainError("batch must be non-empty", code="empty_batch")
    vectors = np.stack([lms.vector for lms in batch])
    grads, _ = _losses_and_gradients(net, stack, model, vectors, cfg)
    return grads


@dataclass(frozen=True, eq=False)
class AdamState:
    m_weights: tuple[np.ndarray, ...]
    v_weights: tuple[np.ndarray, ...]
    m_biases: tuple[np.ndarray, ...]
    v_biases: tuple[np.ndarray, ...]
    step: int = 0


def init_adam_state(net: AdaptorNet) -> AdamState:
    return AdamState(
        m_weights=tuple(np.zeros_like(w) for w in net.weights),
        v_weights=tuple(np.zeros_like(w) for w in net.weights),
        m_biases=tuple(np.zeros_like(b) for b in net.biases),
        v_biases=tuple(np.zeros_like(b) for b in net.biases),
        step=0,
    )


def adam_step(net: AdaptorNet, grads: AdaptorGradients, state: AdamState,
              cfg: TrainConfig) -> tuple[AdaptorNet, AdamState]:
    """One bias-corrected Adam update; returns the new net and state."""
    for g, p in zip((*grads.weights, *grads.biases), (*net.weights, *net.biases)):
        if g.shape != p.shape:
            raise DomainError("gradient shape does not match parameters", code="shape_mismatch")
    t = state.step + 1
    b1, b2, eps, lr = cfg.beta1, cfg.beta2, cfg.epsilon, cfg.learning_rate

    def update(p, g, m, v):
        m_new = b1 * m + (1 - b1) * g
        v_new = b2 * v + (1 - b2) * g * g
        m_hat = m_new / (1 - b1**t)
        v_hat = v_new / (1 - b2**t)
        return p - lr * m_hat / (np.sqrt(v_hat) + eps), m_new, v_new

    new_w, new_mw, new_vw = [], [], []
    for p, g, m, v in zip(net.weights, grads.weights, state.m_weights, state.v_weights):
        pn, mn, vn = update(p, g, m, v)
        new_w.append(pn)
        new_mw.append(mn)
        new_vw.append(vn)
    new_b, new_mb, new_vb = [], [], []
    for p, g, m, v in zip(net.biases, grads.biases, state.m_biases, state.v_biases):
        pn, mn, vn = update(p, g, m, v)
        new_b.append(pn)
        new_mb.append(mn)
        new_vb.append(vn)

    new_net = AdaptorNet(weights=tuple(new_w), biases=tuple(new_b), mean_latent=net.mean_latent)
    new_state = AdamState(
        m_weights=tuple(new_mw), v_weights=tuple(new_vw),
        m_biases=tuple(new_mb), v_biases=tuple(new_vb), step=t,
    )
    return new_net, new_state


@dataclass(frozen=True, eq=False)
class TrainReport:
    loss_curve: tuple[LossBreakdown, ...]
    final: LossBreakdown
    config: dict
    wall_time_s: float
    steps_run: int
    mean_latent_provenance: str

    def as_dict(self) -> dict:
        return {
            "loss_curve": [lb.as_dict() for lb in self.loss_curve],
            "final": self.final.as_dict(),
            "config": self.config,
            "wall_time_s": self.wall_time_s,
            "steps_run": self.steps_run,
            "mean_latent_provenance": self.mean_latent_provenance,
        }


def train_adaptor(model: LpmmModel, stack: SurrogateStack, dataset: LandmarkDataset,
                  cfg: TrainConfig, on_step=None) -> tuple[AdaptorNet, TrainReport]:
    """Seeded mini-batch Adam training against the frozen surrogate.

    The mean latent is the encoder's average output over the training
    dataset. Aborts with the step index if the loss goes non-finite.
    """
    if not dataset.is_canonical():
        raise DomainError("training dataset must be canonical", code="not_canonical")
    t0 = time.perf_counter()
    X = dataset.matrix()
    n_samples = X.shape[0]
    latents = encode_batch(stack, X)
    v_bar = latents.mean(axis=0)
    provenance = f"mean of encoder outputs over {n_samples} training samples"

    net = init_adaptor(cfg.k, stack.w, v_bar, cfg.seed)
    state = init_adam_state(net)
    rng = np.random.default_rng(cfg.seed)

    target_rasters = None
    if cfg.loss_variant == "rgb":
        target_rasters = render_points(decode_points_batch(stack, latents), stack.raster)

    curve: list[LossBreakdown] = []
    if cfg.steps == 0:
        first = rng.permutation(n_samples)[: cfg.batch_size]
        if cfg.loss_variant == "rgb":
            _, losses = _losses_and_gradients(
                net, stack, model, X[first], cfg, target_rasters[first], latents[first]
            )
        else:
            _, losses = _losses_and_gradients(net, stack, model, X[first], cfg, None, latents[first])
        report = TrainReport(
            loss_curve=(losses,), final=losses, config=cfg.as_dict(),
            wall_time_s=time.perf_counter() - t0, steps_run=0,
            mean_latent_provenance=provenance,
        )
        return net, report

    step = 0
    while step < cfg.steps:
        perm = rng.permutation(n_samples)
        for start in range(0, n_samples, cfg.batch_size):
            if step >= cfg.steps:
                break
            idx = perm[start : start + cfg.batch_size]
            tr = target_rasters[idx] if target_rasters is not None else None
            grads, losses = _losses_and_gradients(net, stack, model, X[idx], cfg, tr, latents[idx])
            if not np.isfinite(losses.total):
                raise TrainingDivergedError(step)
            net, state = adam_step(net, grads, state, cfg)
            curve.append(losses)
            step += 1
            if on_step is not None:
                on_step(step, losses)

    report = TrainReport(
        loss_curve=tuple(curve), final=curve[-1], config=cfg.as_dict(),
        wall_time_s=time.perf_counter() - t0, steps_run=step,
        mean_latent_provenance=provenance,
    )
    return net, report


def base_pose_residual(net: AdaptorNet, stack: SurrogateStack, model: LpmmModel) -> float:
    """Mean-abs residual d at the base parameters (the pose-reg quantity)."""
    return float(np.mean(np.abs(_pose_args(net, stack, model)[0])))


def mix_driving_with_params(net: AdaptorNet, model: LpmmModel, driving: LandmarkSet,
                            edits: list[tuple[Blendshape, float]], mode: str = "A",
                            stack: SurrogateStack | None = None) -> tuple[ParamVector, np.ndarray]:
    """Fit the driving landmarks, apply blendshape edits, map to latent.

    Mode A mixes in parameter space: latent = forward(p_drive + edits).
    Mode B keeps the encoder's latent for the driving face and adds the
    edit as a latent residual: encode(driving) + forward(p_mixed) - forward(p_drive).
    """
    if mode not in ("A", "B"):
        raise DomainError(f"unknown mix mode {mode!r}", code="invalid_mode")
    p_drive = fit_params(model, driving, net.k)
    p_mixed = apply_blendshapes(p_drive, edits)
    if mode == "A":
        return p_mixed, adaptor_forward(net, p_mixed)
    if stack is None:
        raise DomainError("mode B requires the surrogate stack", code="missing_surrogate")
    latent = encode_landmarks(stack, driving) + adaptor_forward(net, p_mixed) - adaptor_forward(net, p_drive)
    return p_mixed, latent


def run_loss_ablation(model: LpmmModel, stack: SurrogateStack, dataset: LandmarkDataset,
                      base_cfg: TrainConfig) -> dict:
    """Train the four data-term/regularizer combinations and report them
    side by side."""
    combos = [
        ("rgb", True), ("rgb", False), ("latent", True), ("latent", False),
    ]
    runs = []
    for variant, reg in combos:
        cfg = replace(base_cfg, loss_variant=variant, pose_reg_enabled=reg)
        net, report = train_adaptor(model, stack, dataset, cfg)
        runs.append({
            "loss_variant": variant,
            "pose_reg_enabled": reg,
            "final": report.final.as_dict(),
            "base_pose_residual": base_pose_residual(net, stack, model),
            "steps_run": report.steps_run,
            "wall_time_s": report.wall_time_s,
        })
    return {"runs": runs}


def serialize_adaptor(net: AdaptorNet, train_config: TrainConfig | dict | None = None,
                      surrogate_seed: int | None = None) -> bytes:
    cfg = train_config.as_dict() if isinstance(train_config, TrainConfig) else train_config
    obj = {
        "format": ADAPTOR_FORMAT,
        "version": ADAPTOR_VERSION,
        "k": net.k,
        "w": net.w,
        "widths": list(net.widths),
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "mean_latent": net.mean_latent.tolist(),
        "train_config": cfg,
        "surrogate_seed": surrogate_seed,
    }
    return json.dumps(obj).encode("utf-8")


def deserialize_adaptor(data: bytes) -> tuple[AdaptorNet, dict]:
    """Returns the net plus a metadata dict (train_config, surrogate_seed)."""
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"adaptor file is not valid JSON: {exc}", code="malformed_adaptor") from exc
    if not isinstance(obj, dict) or obj.get("format") != ADAPTOR_FORMAT:
        raise FormatError("not an adaptor file", code="malformed_adaptor")
    if obj.get("version") != ADAPTOR_VERSION:
        raise FormatError(f"unsupported adaptor version {obj.get('version')!r}", code="version_mismatch")
    try:
        k = int(obj["k"])
        w = int(obj["w"])
        widths = [int(x) for x in obj["widths"]]
        weights = tuple(np.asarray(m, dtype=np.float64) for m in obj["weights"])
        biases = tuple(np.asarray(b, dtype=np.float64) for b in obj["biases"])
        mean_latent = np.asarray(obj["mean_latent"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"adaptor file missing or malformed field: {exc}", code="malformed_adaptor") from exc
    if widths != [k, 2 * k, 4 * k, w]:
        raise FormatError("declared widths violate the (k, 2k, 4k, w) chain", code="bad_width_chain")
    net = AdaptorNet(weights=weights, biases=biases, mean_latent=mean_latent)
    if net.k != k or net.w != w:
        raise FormatError("weight shapes do not match declared k/w", code="bad_width_chain")
    meta = {"train_config": obj.get("train_config"), "surrogate_seed": obj.get("surrogate_seed")}
    return net, meta


def save_adaptor(net: AdaptorNet, path, train_config=None, surrogate_seed=None) -> None:
    with open(path, "wb") as f:
        f.write(serialize_adaptor(net, train_config, surrogate_seed))


def load_adaptor(path) -> tuple[AdaptorNet, dict]:
    with open(path, "rb") as f:
        return deserialize_adaptor(f.read())
