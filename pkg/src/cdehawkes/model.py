"""Model parameters and the neural pieces built from them.

Architecture: a trainable type-embedding table feeding a time-augmented
linear control path; an initial-value layer mapping the first knot to the
hidden state; a stack of fully connected layers (ELU between, Tanh last)
producing the CDE field matrix; per-type intensity projections squashed by a
learned-scale softplus; and linear type / inter-arrival prediction heads.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad

CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    num_types: int
    dim_embed: int = 16       # must be even for the sin/cos pairing
    dim_hidden: int = 32
    field_layers: int = 3
    field_hidden: int = 32
    marked_event_term: bool = False

    def __post_init__(self):
        if self.dim_embed < 2 or self.dim_embed % 2 != 0:
            raise ValueError("dim_embed must be an even integer >= 2")
        if self.field_layers < 1:
            raise ValueError("field_layers must be >= 1")
        if min(self.num_types, self.dim_hidden, self.field_hidden) < 1:
            raise ValueError("num_types, dim_hidden and field_hidden must be >= 1")

    @property
    def path_channels(self) -> int:
        return self.dim_embed + 1  # embedding channels plus the time channel


class ModelParams:
    """All trainable tensors, in a fixed named order.

    The softplus scale of each intensity is stored as a log-value and
    exponentiated on use, so positivity needs no constrained optimization.
    """

    def __init__(self, cfg: ModelConfig, tensors: dict[str, ad.Tensor]):
        self.cfg = cfg
        self.tensors = tensors

    @classmethod
    def init(cls, cfg: ModelConfig, seed: int) -> "ModelParams":
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x1417)))
        dz, dh, q = cfg.dim_embed, cfg.dim_hidden, cfg.field_hidden
        C = cfg.path_channels

        def dense(n_in, n_out, scale=1.0):
            return ad.Tensor(rng.normal(0.0, scale / np.sqrt(n_in), size=(n_in, n_out)))

        t: dict[str, ad.Tensor] = {}
        t["embedding"] = ad.Tensor(rng.normal(0.0, 1.0 / np.sqrt(dz), size=(cfg.num_types, dz)))
        t["init_w"] = dense(C, dh)
        t["init_b"] = ad.Tensor(np.zeros(dh))
        sizes = _field_layer_sizes(cfg)
        for m, (n_in, n_out) in enumerate(sizes):
            last = m == len(sizes) - 1
            # final layer scaled down so the early dynamics are mild
            t[f"field_w{m}"] = dense(n_in, n_out, scale=0.1 if last else 1.0)
            t[f"field_b{m}"] = ad.Tensor(np.zeros(n_out))
        t["intensity_w"] = dense(dh, cfg.num_types)
        t["intensity_log_beta"] = ad.Tensor(np.zeros(cfg.num_types))
        t["type_w"] = dense(dh, cfg.num_types)
        t["time_w"] = ad.Tensor(rng.normal(0.0, 1.0 / np.sqrt(dh), size=(dh,)))
        return cls(cfg, t)

    def __getitem__(self, name: str) -> ad.Tensor:
        return self.tensors[name]

    def copy(self) -> "ModelParams":
        return ModelParams(self.cfg, {k: ad.Tensor(v.data.copy()) for k, v in self.tensors.items()})

    def num_parameters(self) -> int:
        return int(sum(v.data.size for v in self.tensors.values()))

    # ------------------------------------------------------------------
    # neural pieces

    def initial_hidden(self, z1: ad.Tensor) -> ad.Tensor:
        """Initial-value map: a fully connected layer on the first (time-augmented) knot."""
        if z1.data.shape[-1] != self.cfg.path_channels:
            raise ad.ShapeError(
                f"initial knot has {z1.data.shape[-1]} channels, expected {self.cfg.path_channels}")
        return ad.linear(z1, self.tensors["init_w"], self.tensors["init_b"])

    def field(self, h: ad.Tensor) -> ad.Tensor:
        """CDE field: ELU-activated dense stack with a final Tanh.

        For a single state (dh,) returns the (dh, C) matrix; for a batch
        (S, dh) returns the flattened (S, dh*C) rows.  Entries are bounded in
        (-1, 1) by the Tanh, keeping the dynamics Lipschitz.
        """
        M = self.cfg.field_layers
        x = h
        for m in range(M):
            x = ad.linear(x, self.tensors[f"field_w{m}"], self.tensors[f"field_b{m}"])
            x = ad.elu(x) if m < M - 1 else ad.tanh(x)
        if h.data.ndim == 1:
            return ad.reshape(x, (self.cfg.dim_hidden, self.cfg.path_channels))
        return x

    def beta(self) -> ad.Tensor:
        return ad.exp(self.tensors["intensity_log_beta"])

    def type_intensities(self, h: ad.Tensor) -> ad.Tensor:
        """Per-type intensities: learned-scale softplus of linear projections; all > 0."""
        return ad.softplus_beta(h @ self.tensors["intensity_w"], self.beta())

    def total_intensity(self, h: ad.Tensor) -> ad.Tensor:
        return ad.tensor_sum(self.type_intensities(h), axis=-1)

    def make_intensity_fn(self):
        """Total-intensity closure with the softplus scale hoisted, so the
        exp(log beta) node is created once per tape rather than per solver stage."""
        beta = self.beta()
        w = self.tensors["intensity_w"]
        return lambda h: ad.intensity_total(h, w, beta)

    def make_field_matvec(self):
        """Closure (h, vec) -> field(h) applied to vec, as one fused tape node."""
        M = self.cfg.field_layers
        ws = [self.tensors[f"field_w{m}"] for m in range(M)]
        bs = [self.tensors[f"field_b{m}"] for m in range(M)]
        dh = self.cfg.dim_hidden
        return lambda h, vec: ad.mlp_tanh_matvec(h, vec, ws, bs, dh)

    def type_logits(self, h: ad.Tensor) -> ad.Tensor:
        return h @ self.tensors["type_w"]

    def inter_arrival(self, h: ad.Tensor) -> ad.Tensor:
        return h @ self.tensors["time_w"]


def _field_layer_sizes(cfg: ModelConfig) -> list[tuple[int, int]]:
    dh, q, C = cfg.dim_hidden, cfg.field_hidden, cfg.path_channels
    out = dh * C
    if cfg.field_layers == 1:
        return [(dh, out)]
    sizes = [(dh, q)]
    sizes += [(q, q)] * (cfg.field_layers - 2)
    sizes.append((q, out))
    return sizes


# ---------------------------------------------------------------------------
# checkpoint IO: flat binary of named float64 tensors + JSON manifest


def save_checkpoint(params: ModelParams, prefix: str) -> tuple[str, str]:
    """Write {prefix}.bin (concatenated little-endian float64) and {prefix}.json."""
    entries = []
    offset = 0
    blobs = []
    for name, t in params.tensors.items():
        arr = np.ascontiguousarray(t.data, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.size
    bin_path, json_path = f"{prefix}.bin", f"{prefix}.json"
    with open(bin_path, "wb") as f:
        f.write(b"".join(blobs))
    with open(json_path, "w") as f:
        json.dump({"version": CHECKPOINT_VERSION, "config": asdict(params.cfg),
                   "tensors": entries}, f, indent=2)
    return bin_path, json_path


def load_checkpoint(prefix: str) -> ModelParams:
    with open(f"{prefix}.json") as f:
        manifest = json.load(f)
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {manifest.get('version')}")
    cfg = ModelConfig(**manifest["config"])
    flat = np.fromfile(f"{prefix}.bin", dtype="<f8")
    tensors: dict[str, ad.Tensor] = {}
    for e in manifest["tensors"]:
        size = int(np.prod(e["shape"])) if e["shape"] else 1
        chunk = flat[e["offset"]:e["offset"] + size].reshape(e["shape"])
        tensors[e["name"]] = ad.Tensor(chunk.astype(np.float64))
    return ModelParams(cfg, tensors)
