# From-scratch graph convolutional network for source scoring.
#
# Architecture: h0 = U x; per layer h <- h + lrelu(BN(lrelu(f(A) h W + b)));
# readout y_i = P relu(Q h_i). Plain numpy tensors (float64 by default,
# float32 for bandwidth-bound training) and every gradient derived by hand
# (no autodiff), including the batch-statistics path through BatchNorm.
# Batches of snapshots on a shared graph are stacked (batch, node, channel);
# applying the propagation rule per sample is exactly the block-diagonal
# multi-graph convolution.
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import E, I, IA, R, S
from .graphs import Graph, PropagationRule
from .scores import SourceScores

__all__ = [
    "CHECKPOINT_VERSION",
    "MODEL_CHANNELS",
    "GnnModel",
    "one_hot_states",
    "forward",
    "loss_and_grad",
    "backward",
    "infer",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_VERSION = "1"

# One-hot channel order per epidemic model.
MODEL_CHANNELS = {
    "sir": (S, I, R),
    "seir": (S, E, I, R),
    "covid_seir": (S, E, I, IA, R),
}

_BN_EPS = 1e-5
_BN_MOMENTUM = 0.1


def one_hot_states(states: np.ndarray, model_kind: str) -> np.ndarray:
    """Encode integer states as one-hot rows for the given model's alphabet.

    Observation time is deliberately not an input channel: the scorer sees
    the snapshot only.
    """
    channels = MODEL_CHANNELS[model_kind]
    lut = np.full(5, -1, dtype=np.int64)
    for ch, code in enumerate(channels):
        lut[code] = ch
    idx = lut[np.asarray(states, dtype=np.int64)]
    if (idx < 0).any():
        raise ValueError(f"snapshot contains states outside the {model_kind!r} alphabet")
    return np.eye(len(channels))[idx]


@dataclass
class GnnModel:
    """Parameter container: projection, conv stack, BN stats and readout.

    ``params`` holds the trainable tensors; ``bn_mean``/``bn_var`` are the
    per-layer running statistics used in eval mode and updated only when a
    train-mode forward asks for it. ``dtype`` is the compute precision:
    float64 for gradient checking, float32 for bandwidth-bound training.
    """

    n_layers: int
    channels: int
    in_channels: int
    rule_kind: str = "symmetric"
    dropout: float = 0.0
    slope: float = 0.01  # leaky-relu negative slope
    dtype: str = "float64"
    params: dict[str, np.ndarray] = field(default_factory=dict)
    bn_mean: list[np.ndarray] = field(default_factory=list)
    bn_var: list[np.ndarray] = field(default_factory=list)

    @staticmethod
    def initialize(n_layers: int, channels: int, in_channels: int, seed: int,
                   rule_kind: str = "symmetric", dropout: float = 0.0,
                   slope: float = 0.01, dtype: str = "float64") -> GnnModel:
        """Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init."""
        rng = np.random.default_rng(seed)
        width = 2 if rule_kind == "mixture" else 1
        dt = np.dtype(dtype)

        def unif(shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape).astype(dt)

        params: dict[str, np.ndarray] = {"u": unif((channels, in_channels), in_channels)}
        for l in range(n_layers):
            fan = width * channels
            params[f"w{l}"] = unif((fan, channels), fan)
            params[f"b{l}"] = unif((channels,), fan)
            params[f"bn{l}_scale"] = np.ones(channels, dtype=dt)
            params[f"bn{l}_shift"] = np.zeros(channels, dtype=dt)
        params["q"] = unif((channels, channels), channels)
        params["p"] = unif((1, channels), channels)
        return GnnModel(
            n_layers=n_layers, channels=channels, in_channels=in_channels,
            rule_kind=rule_kind, dropout=dropout, slope=slope, dtype=dtype,
            params=params,
            bn_mean=[np.zeros(channels, dtype=dt) for _ in range(n_layers)],
            bn_var=[np.ones(channels, dtype=dt) for _ in range(n_layers)],
        )

    def propagation(self, g: Graph) -> PropagationRule:
        cache = g.meta.setdefault("_prop_cache", {})
        rule = cache.get(self.rule_kind)
        if rule is None:
            rule = PropagationRule(g, self.rule_kind)
            cache[self.rule_kind] = rule
        return rule

    def hyperparams(self) -> dict:
        return {
            "n_layers": self.n_layers, "channels": self.channels,
            "in_channels": self.in_channels, "rule_kind": self.rule_kind,
            "dropout": self.dropout, "slope": self.slope, "dtype": self.dtype,
        }


def _lrelu(x: np.ndarray, slope: float) -> np.ndarray:
    """max(x, slope*x); leaves x intact. One temporary, no np.where."""
    out = x * slope
    np.maximum(out, x, out=out)
    return out


def _mul_lrelu_grad(upstream: np.ndarray, positive: np.ndarray, slope: float) -> np.ndarray:
    """upstream * lrelu'(x) given the cached sign mask (upstream untouched)."""
    out = upstream * positive
    out *= (1.0 - slope)
    out += slope * upstream
    return out


def _matmul_last(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """x @ w over the last axis as one flat GEMM (fast for 3D batches)."""
    if x.ndim == 2:
        return x @ w
    lead = x.shape[:-1]
    return (x.reshape(-1, x.shape[-1]) @ w).reshape(*lead, w.shape[-1])


def _flat_apply(mat, h: np.ndarray) -> np.ndarray:
    """Sparse matmul over (batch, node, channel) via one stacked call.

    Returns a contiguous array: downstream elementwise ops and GEMMs on a
    transposed view would be several times slower.
    """
    if h.ndim == 2:
        return mat @ h
    k, n, c = h.shape
    flat = np.ascontiguousarray(h.transpose(1, 0, 2)).reshape(n, k * c)
    return np.ascontiguousarray((mat @ flat).reshape(n, k, c).transpose(1, 0, 2))


def _apply_prop(rule: PropagationRule, h: np.ndarray, transpose: bool = False) -> np.ndarray:
    adj, sym, rw = rule.mats(h.dtype)
    if rule.kind == "mixture":
        # channel concatenation [A h || Sym h]; adjoint sums the two halves
        if transpose:
            c = h.shape[-1] // 2
            return _flat_apply(adj, np.ascontiguousarray(h[..., :c])) \
                + _flat_apply(sym, np.ascontiguousarray(h[..., c:]))
        return np.concatenate([_flat_apply(adj, h), _flat_apply(sym, h)], axis=-1)
    mat = sym if rule.kind == "symmetric" else rw
    return _flat_apply(mat.T.tocsr() if (transpose and rule.kind == "random_walk") else mat, h)


def forward(
    model: GnnModel,
    g: Graph,
    x: np.ndarray,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    update_stats: bool | None = None,
    want_cache: bool = False,
):
    """Per-node logits for one-hot inputs ``x`` of shape (..., n, M).

    ``mode="train"`` uses batch statistics in BN and applies dropout after
    each residual addition (an rng is then required if dropout > 0);
    ``mode="eval"`` is deterministic and uses running statistics. Running
    stats are updated on train-mode passes unless ``update_stats=False``
    (gradient checking needs idempotent forwards).

    With ``want_cache`` the returned tuple is (logits, cache) where cache
    holds the intermediates :func:`backward` consumes.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    train = mode == "train"
    if update_stats is None:
        update_stats = train
    if x.shape[-1] != model.in_channels:
        raise ValueError(
            f"input width {x.shape[-1]} != model in_channels {model.in_channels}"
        )
    if x.shape[-2] != g.n:
        raise ValueError(f"input has {x.shape[-2]} nodes, graph has {g.n}")
    rule = model.propagation(g)
    p = model.params
    slope = model.slope
    keep = 1.0 - model.dropout
    dt = np.dtype(model.dtype)
    x = np.ascontiguousarray(x, dtype=dt)

    h = _matmul_last(x, p["u"].T)
    cache: dict = {"x": x, "layers": []}
    for l in range(model.n_layers):
        m = _apply_prop(rule, h)
        z = _matmul_last(m, p[f"w{l}"])
        z += p[f"b{l}"]
        z_pos = z > 0
        a = _lrelu(z, slope)
        if train:
            axes = tuple(range(a.ndim - 1))
            mu = a.mean(axis=axes)
            var = a.var(axis=axes)
            if update_stats:
                model.bn_mean[l] = ((1 - _BN_MOMENTUM) * model.bn_mean[l]
                                    + _BN_MOMENTUM * mu).astype(dt)
                model.bn_var[l] = ((1 - _BN_MOMENTUM) * model.bn_var[l]
                                   + _BN_MOMENTUM * var).astype(dt)
        else:
            mu, var = model.bn_mean[l], model.bn_var[l]
        std = np.sqrt(var.astype(dt) + dt.type(_BN_EPS))
        ah = a  # a is dead past this point; normalize it in place
        ah -= mu
        ah /= std
        bnorm = ah * p[f"bn{l}_scale"]
        bnorm += p[f"bn{l}_shift"]
        bn_pos = bnorm > 0
        h_new = _lrelu(bnorm, slope)
        h_new += h
        mask = None
        if train and model.dropout > 0.0:
            if rng is None:
                raise ValueError("train-mode forward with dropout needs an rng")
            mask = rng.random(h_new.shape, dtype=np.float32) < keep
            h_new *= mask
            h_new /= dt.type(keep)
        if want_cache:
            cache["layers"].append({
                "m": m, "z_pos": z_pos, "ah": ah, "std": std,
                "bn_pos": bn_pos, "mask": mask,
                # distance of the preactivations from the leaky-relu kinks,
                # used by gradient checks to reject near-kink configurations
                "z_margin": float(np.abs(z).min()),
                "bn_margin": float(np.abs(bnorm).min()),
            })
        h = h_new

    u_ro = _matmul_last(h, p["q"].T)
    v_ro = np.maximum(u_ro, 0.0)
    y = _matmul_last(v_ro, p["p"].T)[..., 0]
    if want_cache:
        cache.update({"h_top": h, "u_ro": u_ro, "v_ro": v_ro, "train": train,
                      "ro_margin": float(np.abs(u_ro).min())})
        return y, cache
    return y


def loss_and_grad(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean per-sample cross-entropy with a softmax over each sample's nodes.

    ``logits`` is (k, n) and ``targets`` the true source per sample.
    Returns the scalar loss and dL/dlogits.
    """
    logits = np.atleast_2d(logits)
    targets = np.atleast_1d(targets)
    k = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted - logz[:, None]
    loss = -logp[np.arange(k), targets].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(k), targets] -= 1.0
    return float(loss), dlogits / k


def backward(model: GnnModel, g: Graph, cache: dict,
             dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradients of the batch loss for every parameter."""
    rule = model.propagation(g)
    p = model.params
    slope = model.slope
    keep = 1.0 - model.dropout
    dt = np.dtype(model.dtype)
    c = model.channels
    grads: dict[str, np.ndarray] = {}

    dy = np.asarray(dlogits, dtype=dt)
    if dy.ndim == cache["h_top"].ndim - 1:
        dy = dy[..., None]
    # readout
    flat_v = cache["v_ro"].reshape(-1, c)
    grads["p"] = (dy.reshape(1, -1) @ flat_v)
    dv = dy * p["p"][0]
    du = dv * (cache["u_ro"] > 0)
    flat_du = du.reshape(-1, c)
    grads["q"] = flat_du.T @ cache["h_top"].reshape(-1, c)
    dh = _matmul_last(du, p["q"])

    for l in reversed(range(model.n_layers)):
        layer = cache["layers"][l]
        if layer["mask"] is not None:
            dh *= layer["mask"]
            dh /= dt.type(keep)
        # dh is the grad wrt (h_prev + r); it flows to the previous layer
        # unchanged (residual identity) and through the conv branch.
        dbnorm = _mul_lrelu_grad(dh, layer["bn_pos"], slope)
        flat_dbn = dbnorm.reshape(-1, c)
        flat_ah = layer["ah"].reshape(-1, c)
        grads[f"bn{l}_scale"] = np.einsum("rc,rc->c", flat_dbn, flat_ah)
        grads[f"bn{l}_shift"] = flat_dbn.sum(axis=0)
        dah = dbnorm
        dah *= p[f"bn{l}_scale"]
        if cache["train"]:
            # fused batch-norm backward through the batch statistics
            rows = flat_ah.shape[0]
            m1 = grads[f"bn{l}_shift"] * (p[f"bn{l}_scale"] / rows)
            m2 = grads[f"bn{l}_scale"] * (p[f"bn{l}_scale"] / rows)
            dah -= m1
            dah -= layer["ah"] * m2
        da = dah
        da /= layer["std"]
        dz = _mul_lrelu_grad(da, layer["z_pos"], slope)
        w_in = layer["m"].shape[-1]
        grads[f"w{l}"] = layer["m"].reshape(-1, w_in).T @ dz.reshape(-1, c)
        grads[f"b{l}"] = dz.reshape(-1, c).sum(axis=0)
        dm = _matmul_last(dz, p[f"w{l}"].T)
        dh += _apply_prop(rule, dm, transpose=True)
    grads["u"] = dh.reshape(-1, c).T @ cache["x"].reshape(-1, model.in_channels)
    return grads


def infer(model: GnnModel, g: Graph, states: np.ndarray,
          model_kind: str | None = None) -> SourceScores:
    """Single deterministic forward pass; logits become source scores."""
    kind = model_kind or _kind_for_width(model.in_channels)
    x = one_hot_states(states, kind)
    return SourceScores(scores=forward(model, g, x, mode="eval"))


def _kind_for_width(m: int) -> str:
    for kind, channels in MODEL_CHANNELS.items():
        if len(channels) == m:
            return kind
    raise ValueError(f"no epidemic model has {m} states")


# --------------------------------------------------------------------------
# Checkpoints: JSON header line + little-endian float64 payload per tensor
# --------------------------------------------------------------------------


def save_checkpoint(model: GnnModel, path: str | Path) -> None:
    tensors: list[tuple[str, np.ndarray]] = sorted(model.params.items())
    for l in range(model.n_layers):
        tensors.append((f"bn{l}_running_mean", model.bn_mean[l]))
        tensors.append((f"bn{l}_running_var", model.bn_var[l]))
    index = []
    offset = 0
    for name, arr in tensors:
        count = int(arr.size)
        index.append({"name": name, "shape": list(arr.shape),
                      "offset": offset, "count": count})
        offset += count * 8
    header = {
        "version": CHECKPOINT_VERSION,
        "hyperparams": model.hyperparams(),
        "tensors": index,
    }
    with Path(path).open("wb") as fh:
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        for _, arr in tensors:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> GnnModel:
    with Path(path).open("rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']!r}")
        payload = fh.read()
    hp = header["hyperparams"]
    dt = np.dtype(hp.get("dtype", "float64"))
    model = GnnModel(
        n_layers=hp["n_layers"], channels=hp["channels"], in_channels=hp["in_channels"],
        rule_kind=hp["rule_kind"], dropout=hp["dropout"], slope=hp["slope"],
        dtype=str(dt),
        bn_mean=[None] * hp["n_layers"], bn_var=[None] * hp["n_layers"],
    )
    for entry in header["tensors"]:
        start = entry["offset"]
        arr = np.frombuffer(
            payload[start:start + entry["count"] * 8], dtype="<f8"
        ).reshape(entry["shape"]).astype(dt)
        name = entry["name"]
        if name.endswith("_running_mean"):
            model.bn_mean[int(name[2:name.index("_")])] = arr
        elif name.endswith("_running_var"):
            model.bn_var[int(name[2:name.index("_")])] = arr
        else:
            model.params[name] = arr
    return model
