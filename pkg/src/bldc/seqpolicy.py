"""History-based sequence policy: encoder + gated recurrent cell + softmax.

Architecture (all math in float64):

  encoder   two strided 3x3 convolutions (stride 2, padding 1, tanh) followed
            by an affine layer with tanh ("conv"), or a single affine layer
            over the flattened observation ("flat").
  recurrent gated cell over the embedding e and hidden state h:
                z  = sigmoid(Wz e + Uz h + bz)
                r  = sigmoid(Wr e + Ur h + br)
                c  = tanh(Wc e + r * (Uc h) + bc)
                h' = z * h + (1 - z) * c
  head      affine h' -> action logits -> softmax.

The cloning loss is the summed negative log likelihood of demonstrated
actions over whole trajectories, with the hidden state reset at each episode
start. Gradients are exact backprop-through-time over the full sequence (no
truncation). Log-probabilities are clamped at ln(1e-12) to keep the loss
finite under early-training saturation; clamped steps contribute zero
gradient and are counted in the returned report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, UsageError
from .rng import SplitMix64

LOG_EPS = float(np.log(1e-12))
PROB_EPS = 1e-12


def _conv_out(size: int) -> int:
    # 3x3 kernel, stride 2, padding 1
    return (size - 1) // 2 + 1


@dataclass(frozen=True)
class ArchSpec:
    """Network shape; together with float64 weights it defines the policy class."""

    obs_channels: int
    height: int
    width: int
    action_count: int
    hidden_size: int = 64
    encoder: str = "conv"
    conv_filters: tuple[int, int] = (8, 16)
    embed_size: int = 64

    def __post_init__(self):
        if self.encoder not in ("conv", "flat"):
            raise ConfigError(f"unknown encoder {self.encoder!r}")
        if self.action_count < 2 or self.hidden_size < 1:
            raise ConfigError("degenerate architecture")

    def conv_dims(self):
        h1, w1 = _conv_out(self.height), _conv_out(self.width)
        h2, w2 = _conv_out(h1), _conv_out(w1)
        return (h1, w1), (h2, w2)

    def param_layout(self) -> list[tuple[str, tuple[int, ...]]]:
        c, e, h, a = (self.obs_channels, self.embed_size, self.hidden_size,
                      self.action_count)
        layout: list[tuple[str, tuple[int, ...]]] = []
        if self.encoder == "conv":
            f1, f2 = self.conv_filters
            (h1, w1), (h2, w2) = self.conv_dims()
            layout += [
                ("conv1_w", (f1, c, 3, 3)), ("conv1_b", (f1,)),
                ("conv2_w", (f2, f1, 3, 3)), ("conv2_b", (f2,)),
                ("embed_w", (e, f2 * h2 * w2)), ("embed_b", (e,)),
            ]
        else:
            layout += [
                ("embed_w", (e, c * self.height * self.width)), ("embed_b", (e,)),
            ]
        layout += [
            ("gru_wx", (3 * h, e)), ("gru_wh", (3 * h, h)), ("gru_b", (3 * h,)),
            ("head_w", (a, h)), ("head_b", (a,)),
        ]
        return layout

    @property
    def parameter_count(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.param_layout())

    def to_json(self) -> dict:
        return {"obs_channels": self.obs_channels, "height": self.height,
                "width": self.width, "action_count": self.action_count,
                "hidden_size": self.hidden_size, "encoder": self.encoder,
                "conv_filters": list(self.conv_filters),
                "embed_size": self.embed_size}

    @classmethod
    def from_json(cls, data: dict) -> "ArchSpec":
        data = dict(data)
        data["conv_filters"] = tuple(data.get("conv_filters", (8, 16)))
        return cls(**data)


class _Params:
    """View of the flat parameter vector as named tensors."""

    def __init__(self, arch: ArchSpec, vector: np.ndarray):
        if vector.shape != (arch.parameter_count,):
            raise UsageError(
                f"parameter vector has {vector.shape}, expected ({arch.parameter_count},)")
        self.vector = vector
        self.views = {}
        off = 0
        for name, shape in arch.param_layout():
            n = int(np.prod(shape))
            self.views[name] = vector[off:off + n].reshape(shape)
            off += n

    def __getitem__(self, name: str) -> np.ndarray:
        return self.views[name]

    def __setitem__(self, name: str, value) -> None:
        self.views[name][...] = value


def init_params(arch: ArchSpec, seed: int) -> np.ndarray:
    """Deterministic init: fan-in-scaled uniform weights, zero biases, and an
    orthogonalized recurrent matrix (QR of a uniform square, per gate)."""
    rng = SplitMix64(seed)
    vector = np.zeros(arch.parameter_count, dtype=np.float64)
    params = _Params(arch, vector)
    for name, shape in arch.param_layout():
        view = params[name]
        if name.endswith("_b"):
            continue
        if name == "gru_wh":
            h = arch.hidden_size
            blocks = []
            for _ in range(3):
                a = rng.fill_uniform(h * h).reshape(h, h) * 2.0 - 1.0
                q, r = np.linalg.qr(a)
                q = q * np.sign(np.diag(r))  # canonical sign
                blocks.append(q)
            view[:] = np.concatenate(blocks, axis=0)
            continue
        fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
        scale = 1.0 / np.sqrt(fan_in)
        view[:] = (rng.fill_uniform(view.size).reshape(shape) * 2.0 - 1.0) * scale
    return vector


# ---------------------------------------------------------------------------
# Convolution via precomputed gather indices (stride 2, pad 1, kernel 3)

_COL_CACHE: dict = {}


def _col_indices(height: int, width: int):
    key = (height, width)
    if key not in _COL_CACHE:
        ho, wo = _conv_out(height), _conv_out(width)
        ii, jj = np.meshgrid(np.arange(ho), np.arange(wo), indexing="ij")
        rows, cols = [], []
        for ki in range(3):
            for kj in range(3):
                rows.append((2 * ii + ki).reshape(-1))
                cols.append((2 * jj + kj).reshape(-1))
        _COL_CACHE[key] = (np.stack(rows), np.stack(cols), ho, wo)
    return _COL_CACHE[key]


def _im2col(x: np.ndarray):
    """(B, C, H, W) -> (B, C*9, L) patches for the strided conv."""
    b, c, height, width = x.shape
    rows, cols, ho, wo = _col_indices(height, width)
    padded = np.zeros((b, c, height + 2, width + 2), dtype=np.float64)
    padded[:, :, 1:-1, 1:-1] = x
    patches = padded[:, :, rows, cols]          # (B, C, 9, L)
    return patches.reshape(b, c * 9, ho * wo), (ho, wo)


def _col2im_grad(dcols: np.ndarray, c: int, height: int, width: int) -> np.ndarray:
    """Adjoint of _im2col: (B, C*9, L) -> (B, C, H, W)."""
    b = dcols.shape[0]
    rows, cols, ho, wo = _col_indices(height, width)
    dcols = dcols.reshape(b, c, 9, ho * wo)
    buf = np.zeros((b, c, height + 2, width + 2), dtype=np.float64)
    for k in range(9):
        buf[:, :, rows[k], cols[k]] += dcols[:, :, k, :]
    return buf[:, :, 1:-1, 1:-1]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Forward pass


def _encode(params: _Params, arch: ArchSpec, x: np.ndarray, cache: dict | None):
    """Observation batch (B, C, h, w) -> embedding (B, E)."""
    if arch.encoder == "conv":
        f1, f2 = arch.conv_filters
        cols1, (h1, w1) = _im2col(x)
        pre1 = np.matmul(params["conv1_w"].reshape(f1, -1), cols1)
        a1 = np.tanh(pre1 + params["conv1_b"][:, None])      # (B, F1, L1)
        a1_img = a1.reshape(x.shape[0], f1, h1, w1)
        cols2, (h2, w2) = _im2col(a1_img)
        pre2 = np.matmul(params["conv2_w"].reshape(f2, -1), cols2)
        a2 = np.tanh(pre2 + params["conv2_b"][:, None])      # (B, F2, L2)
        flat = a2.reshape(x.shape[0], -1)
    else:
        flat = x.reshape(x.shape[0], -1)
    emb = np.tanh(flat @ params["embed_w"].T + params["embed_b"])
    if cache is not None:
        cache["x"] = x
        cache["emb"] = emb
        cache["flat"] = flat
        if arch.encoder == "conv":
            cache["a1"] = a1
            cache["a2"] = a2
    return emb


def _encode_backward(params: _Params, arch: ArchSpec, cache: dict,
                     demb: np.ndarray, grads: _Params) -> None:
    dflat_pre = demb * (1.0 - cache["emb"] ** 2)             # (B, E)
    grads["embed_w"] += dflat_pre.T @ cache["flat"]
    grads["embed_b"] += dflat_pre.sum(axis=0)
    if arch.encoder != "conv":
        return
    f1, f2 = arch.conv_filters
    x = cache["x"]
    b = x.shape[0]
    (h1, w1), (h2, w2) = arch.conv_dims()
    dflat = dflat_pre @ params["embed_w"]                    # (B, F2*L2)
    da2 = dflat.reshape(b, f2, h2 * w2)
    dpre2 = da2 * (1.0 - cache["a2"] ** 2)
    a1_img = cache["a1"].reshape(b, f1, h1, w1)
    cols2, _ = _im2col(a1_img)
    grads["conv2_w"] += np.matmul(dpre2, cols2.transpose(0, 2, 1)).sum(axis=0).reshape(f2, f1, 3, 3)
    grads["conv2_b"] += dpre2.sum(axis=(0, 2))
    dcols2 = np.matmul(params["conv2_w"].reshape(f2, -1).T, dpre2)
    da1 = _col2im_grad(dcols2, f1, h1, w1).reshape(b, f1, h1 * w1)
    dpre1 = da1 * (1.0 - cache["a1"] ** 2)
    cols1, _ = _im2col(x)
    grads["conv1_w"] += np.matmul(dpre1, cols1.transpose(0, 2, 1)).sum(axis=0).reshape(f1, arch.obs_channels, 3, 3)
    grads["conv1_b"] += dpre1.sum(axis=(0, 2))
    # gradient w.r.t. the observation itself is never needed


def _gru_step(params: _Params, arch: ArchSpec, emb: np.ndarray,
              h_prev: np.ndarray, cache: dict | None):
    hs = arch.hidden_size
    gx = emb @ params["gru_wx"].T + params["gru_b"]          # (B, 3H)
    gh = h_prev @ params["gru_wh"].T                          # (B, 3H)
    z = _sigmoid(gx[:, :hs] + gh[:, :hs])
    r = _sigmoid(gx[:, hs:2 * hs] + gh[:, hs:2 * hs])
    ghc = gh[:, 2 * hs:]
    c = np.tanh(gx[:, 2 * hs:] + r * ghc)
    h_new = z * h_prev + (1.0 - z) * c
    if cache is not None:
        cache.update(z=z, r=r, c=c, ghc=ghc, h_prev=h_prev, emb=emb)
    return h_new


def _gru_backward(params: _Params, arch: ArchSpec, cache: dict,
                  dh: np.ndarray, grads: _Params):
    hs = arch.hidden_size
    z, r, c, ghc, h_prev = cache["z"], cache["r"], cache["c"], cache["ghc"], cache["h_prev"]
    dz = dh * (h_prev - c)
    dc = dh * (1.0 - z)
    dh_prev = dh * z
    dc_pre = dc * (1.0 - c ** 2)
    dr = dc_pre * ghc
    dghc = dc_pre * r
    dz_pre = dz * z * (1.0 - z)
    dr_pre = dr * r * (1.0 - r)
    dgx = np.concatenate([dz_pre, dr_pre, dc_pre], axis=1)   # (B, 3H)
    dgh = np.concatenate([dz_pre, dr_pre, dghc], axis=1)
    grads["gru_wx"] += dgx.T @ cache["emb"]
    grads["gru_b"] += dgx.sum(axis=0)
    grads["gru_wh"] += dgh.T @ h_prev
    demb = dgx @ params["gru_wx"]
    dh_prev = dh_prev + dgh @ params["gru_wh"]
    return demb, dh_prev


def forward(params: np.ndarray, arch: ArchSpec, obs: np.ndarray,
            hidden: np.ndarray):
    """Single-observation forward: returns (action distribution, new hidden)."""
    p = _Params(arch, params)
    if obs.shape != (arch.obs_channels, arch.height, arch.width):
        raise UsageError(f"observation shape {obs.shape} does not match arch")
    if hidden.shape != (arch.hidden_size,):
        raise UsageError("hidden state shape does not match arch")
    emb = _encode(p, arch, obs[None].astype(np.float64), None)
    h_new = _gru_step(p, arch, emb, hidden[None], None)
    logits = h_new @ p["head_w"].T + p["head_b"]
    return _softmax(logits)[0], h_new[0]


def forward_batch(params: np.ndarray, arch: ArchSpec, obs: np.ndarray,
                  hidden: np.ndarray):
    """Batched forward for rollouts: obs (B, C, h, w), hidden (B, H)."""
    p = _Params(arch, params)
    emb = _encode(p, arch, obs.astype(np.float64), None)
    h_new = _gru_step(p, arch, emb, hidden, None)
    logits = h_new @ p["head_w"].T + p["head_b"]
    return _softmax(logits), h_new


def zero_hidden(arch: ArchSpec, batch: int | None = None) -> np.ndarray:
    if batch is None:
        return np.zeros(arch.hidden_size, dtype=np.float64)
    return np.zeros((batch, arch.hidden_size), dtype=np.float64)


def act(params: np.ndarray, arch: ArchSpec, obs: np.ndarray, hidden: np.ndarray,
        mode: str = "argmax", rng: SplitMix64 | None = None):
    """Action selection: argmax with lowest-index tie-break, or a categorical
    sample under the provided rng."""
    dist, h_new = forward(params, arch, obs, hidden)
    if mode == "argmax":
        return int(np.argmax(dist)), h_new
    if mode == "sample":
        if rng is None:
            raise UsageError("sample mode requires an rng")
        u = rng.uniform()
        return int(np.searchsorted(np.cumsum(dist), u, side="right").clip(0, arch.action_count - 1)), h_new
    raise UsageError(f"unknown act mode {mode!r}")


# ---------------------------------------------------------------------------
# Loss and exact BPTT over batches of whole trajectories


@dataclass
class LossReport:
    total: float
    steps: int
    saturated_steps: int = 0

    @property
    def per_step(self) -> float:
        return self.total / max(1, self.steps)


def _pack_batch(arch: ArchSpec, trajectories):
    lengths = [t.steps for t in trajectories]
    b, t_max = len(trajectories), max(lengths)
    obs = np.zeros((b, t_max, arch.obs_channels, arch.height, arch.width),
                   dtype=np.float64)
    actions = np.zeros((b, t_max), dtype=np.int64)
    mask = np.zeros((b, t_max), dtype=np.float64)
    for i, traj in enumerate(trajectories):
        n = lengths[i]
        obs[i, :n] = traj.observations
        actions[i, :n] = traj.actions
        mask[i, :n] = 1.0
    return obs, actions, mask


def _sequence_pass(params: np.ndarray, arch: ArchSpec, trajectories,
                   want_grad: bool):
    if not trajectories:
        raise UsageError("empty trajectory batch")
    p = _Params(arch, params)
    obs, actions, mask = _pack_batch(arch, trajectories)
    b, t_max = actions.shape
    h = np.zeros((b, arch.hidden_size), dtype=np.float64)
    caches = []
    total = 0.0
    saturated = 0
    argmax_mismatch = 0
    for t in range(t_max):
        cache: dict = {}
        emb = _encode(p, arch, obs[:, t], cache if want_grad else None)
        gcache: dict = {}
        h_cand = _gru_step(p, arch, emb, h, gcache if want_grad else None)
        m = mask[:, t][:, None]
        h_new = m * h_cand + (1.0 - m) * h
        logits = h_cand @ p["head_w"].T + p["head_b"]
        probs = _softmax(logits)
        pa = probs[np.arange(b), actions[:, t]]
        logp = np.log(np.maximum(pa, PROB_EPS))
        clamped = pa < PROB_EPS
        step_mask = mask[:, t].astype(bool)
        total += float(-(logp * mask[:, t]).sum())
        saturated += int((clamped & step_mask).sum())
        argmax_mismatch += int(((probs.argmax(axis=1) != actions[:, t]) & step_mask).sum())
        if want_grad:
            caches.append((cache, gcache, probs, clamped, h_cand))
        h = h_new
    steps = int(mask.sum())
    report = LossReport(total=total, steps=steps, saturated_steps=saturated)
    if not want_grad:
        return report, argmax_mismatch, None

    grads_vec = np.zeros_like(params)
    grads = _Params(arch, grads_vec)
    dh_carry = np.zeros((b, arch.hidden_size), dtype=np.float64)
    for t in range(t_max - 1, -1, -1):
        cache, gcache, probs, clamped, h_cand = caches[t]
        m = mask[:, t][:, None]
        dlogits = probs.copy()
        dlogits[np.arange(b), actions[:, t]] -= 1.0
        dlogits *= mask[:, t][:, None]
        dlogits[clamped] = 0.0
        grads["head_w"] += dlogits.T @ h_cand
        grads["head_b"] += dlogits.sum(axis=0)
        dh_cand = dlogits @ p["head_w"] + dh_carry * m
        dh_passthrough = dh_carry * (1.0 - m)
        demb, dh_prev = _gru_backward(p, arch, gcache, dh_cand, grads)
        _encode_backward(p, arch, cache, demb, grads)
        dh_carry = dh_prev + dh_passthrough
    return report, argmax_mismatch, grads_vec


def nll_loss(params: np.ndarray, arch: ArchSpec, trajectories) -> LossReport:
    """Exact summed negative log likelihood over whole trajectories."""
    report, _, _ = _sequence_pass(params, arch, trajectories, want_grad=False)
    return report


def argmax_mismatches(params: np.ndarray, arch: ArchSpec, trajectories) -> int:
    """Count of demonstrated steps where the policy argmax disagrees."""
    _, mismatch, _ = _sequence_pass(params, arch, trajectories, want_grad=False)
    return mismatch


def grad_nll(params: np.ndarray, arch: ArchSpec, trajectories):
    """(gradient of the summed loss, loss report); exact full-sequence BPTT."""
    report, _, grads = _sequence_pass(params, arch, trajectories, want_grad=True)
    return grads, report


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(path, arch: ArchSpec, params: np.ndarray) -> None:
    header = json.dumps(arch.to_json(), sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(len(header).to_bytes(4, "little"))
        f.write(header)
        f.write(params.astype("<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as f:
        data = f.read()
    hlen = int.from_bytes(data[:4], "little")
    arch = ArchSpec.from_json(json.loads(data[4:4 + hlen]))
    params = np.frombuffer(data[4 + hlen:], dtype="<f8").copy()
    if params.shape != (arch.parameter_count,):
        raise FormatError("checkpoint weight count does not match header")
    return arch, params
