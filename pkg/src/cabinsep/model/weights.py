"""Weight container: layer enumeration, file format, random initialization.

File format (little-endian):
    line 1: "CABINSEP-WEIGHTS v1"
    lines:  "meta <key> <value>"
    lines:  "tensor <name> float32 <d0>x<d1>x..."  (payload order)
    line:   "DATA"
    then the concatenated row-major float32 payload.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInput, WeightShapeError
from .config import ModelConfig

_MAGIC = "CABINSEP-WEIGHTS v1"
_CONV_KERNEL = 3  # time x freq kernel size of every 2-D convolution


def required_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Canonical layer-path -> shape map for a configuration.

    Iteration order is the payload order of the container file.
    """
    z = cfg.zones
    c = cfg.embed_channels
    enc = cfg.encoder_channels
    fbh = cfg.fullband_hidden
    h = cfg.subband_hidden
    ff = cfg.ff_dim
    comp = c // cfg.tac_compression
    cf = c * cfg.bins
    k = _CONV_KERNEL

    shapes: dict[str, tuple[int, ...]] = {}

    for name, in_ch in (("spec", 2 * z), ("lps", z), ("ipd", 2)):
        shapes[f"enc_{name}.conv1.w"] = (enc, in_ch, k, k)
        shapes[f"enc_{name}.conv1.b"] = (enc,)
        shapes[f"enc_{name}.conv2.w"] = (enc, enc, k, k)
        shapes[f"enc_{name}.conv2.b"] = (enc,)
    shapes["merge.w"] = (c, 3 * enc, 1, 1)
    shapes["merge.b"] = (c,)

    for i in range(cfg.n_full_sub):
        p = f"block{i}"
        shapes[f"{p}.fullband.in_proj.w"] = (fbh, cf)
        shapes[f"{p}.fullband.in_proj.b"] = (fbh,)
        shapes[f"{p}.fullband.lstm.w_ih"] = (4 * fbh, fbh)
        shapes[f"{p}.fullband.lstm.w_hh"] = (4 * fbh, fbh)
        shapes[f"{p}.fullband.lstm.b_ih"] = (4 * fbh,)
        shapes[f"{p}.fullband.lstm.b_hh"] = (4 * fbh,)
        shapes[f"{p}.fullband.out_proj.w"] = (cf, fbh)
        shapes[f"{p}.fullband.out_proj.b"] = (cf,)

        shapes[f"{p}.tac.linear_a.w"] = (comp, c)
        shapes[f"{p}.tac.linear_a.b"] = (comp,)
        shapes[f"{p}.tac.linear_b.w"] = (comp, c)
        shapes[f"{p}.tac.linear_b.b"] = (comp,)
        shapes[f"{p}.tac.linear_c.w"] = (c, 2 * comp)
        shapes[f"{p}.tac.linear_c.b"] = (c,)

        shapes[f"{p}.subband.conv_in.w"] = (h, c)
        shapes[f"{p}.subband.conv_in.b"] = (h,)
        for j in range(cfg.conformer_layers):
            q = f"{p}.subband.layer{j}"
            for ln in ("ln_ff1", "ln_att", "ln_conv", "ln_ff2", "ln_out"):
                shapes[f"{q}.{ln}.g"] = (h,)
                shapes[f"{q}.{ln}.b"] = (h,)
            for ffname in ("ff1", "ff2"):
                shapes[f"{q}.{ffname}.w1"] = (ff, h)
                shapes[f"{q}.{ffname}.b1"] = (ff,)
                shapes[f"{q}.{ffname}.w2"] = (h, ff)
                shapes[f"{q}.{ffname}.b2"] = (h,)
            for proj in ("wq", "wk", "wv", "wo"):
                shapes[f"{q}.att.{proj}"] = (h, h)
            for bias in ("bq", "bk", "bv", "bo"):
                shapes[f"{q}.att.{bias}"] = (h,)
            shapes[f"{q}.conv.pw1.w"] = (2 * h, h)
            shapes[f"{q}.conv.pw1.b"] = (2 * h,)
            shapes[f"{q}.conv.dw.w"] = (h, k)
            shapes[f"{q}.conv.dw.b"] = (h,)
            shapes[f"{q}.conv.pw2.w"] = (h, h)
            shapes[f"{q}.conv.pw2.b"] = (h,)
        shapes[f"{p}.subband.proj_out.w"] = (c, h)
        shapes[f"{p}.subband.proj_out.b"] = (c,)

    shapes["decoder.w"] = (z, c, k, k)
    shapes["decoder.b"] = (z,)
    shapes["head_speech.w"] = (z, z)
    shapes["head_speech.b"] = (z,)
    shapes["head_noise.w"] = (z, z)
    shapes["head_noise.b"] = (z,)
    return shapes


def count_params(cfg: ModelConfig) -> int:
    """Total number of weights (exact, derived from the layer map)."""
    return sum(int(np.prod(s)) for s in required_shapes(cfg).values())


class ModelWeights:
    """Named float32 tensor map plus metadata, with a bit-exact file format."""

    def __init__(self, tensors: dict[str, np.ndarray], fingerprint: str = "",
                 seed: int | None = None):
        self.tensors = {
            name: np.ascontiguousarray(t, dtype=np.float32) for name, t in tensors.items()
        }
        self.fingerprint = fingerprint
        self.seed = seed

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def validate(self, cfg: ModelConfig) -> None:
        """Check the tensor map matches the config exactly (no missing, no extras)."""
        expected = required_shapes(cfg)
        missing = sorted(set(expected) - set(self.tensors))
        extra = sorted(set(self.tensors) - set(expected))
        if missing or extra:
            raise WeightShapeError(
                f"weight container does not match config: missing={missing[:5]}, "
                f"extra={extra[:5]}"
            )
        for name, shape in expected.items():
            got = self.tensors[name].shape
            if tuple(got) != tuple(shape):
                raise WeightShapeError(f"{name}: expected shape {shape}, got {tuple(got)}")

    def save(self, path) -> None:
        header = [_MAGIC]
        header.append(f"meta fingerprint {self.fingerprint or '-'}")
        header.append(f"meta seed {self.seed if self.seed is not None else '-'}")
        for name, tensor in self.tensors.items():
            dims = "x".join(str(d) for d in tensor.shape) if tensor.ndim else "1"
            header.append(f"tensor {name} float32 {dims}")
        header.append("DATA\n")
        with open(path, "wb") as fh:
            fh.write("\n".join(header).encode("utf-8"))
            for tensor in self.tensors.values():
                fh.write(tensor.astype("<f4", copy=False).tobytes())

    @classmethod
    def load(cls, path) -> "ModelWeights":
        with open(path, "rb") as fh:
            blob = fh.read()
        marker = b"DATA\n"
        split = blob.find(marker)
        if split < 0:
            raise InvalidInput(f"{path}: not a weight container (missing DATA marker)")
        header_lines = blob[:split].decode("utf-8").splitlines()
        if not header_lines or header_lines[0] != _MAGIC:
            raise InvalidInput(f"{path}: bad magic line")
        payload = blob[split + len(marker):]

        fingerprint, seed = "", None
        entries: list[tuple[str, tuple[int, ...]]] = []
        for line in header_lines[1:]:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "meta":
                if parts[1] == "fingerprint":
                    fingerprint = "" if parts[2] == "-" else parts[2]
                elif parts[1] == "seed":
                    seed = None if parts[2] == "-" else int(parts[2])
            elif parts[0] == "tensor":
                name, dtype, dims = parts[1], parts[2], parts[3]
                if dtype != "float32":
                    raise InvalidInput(f"{path}: unsupported dtype {dtype}")
                entries.append((name, tuple(int(d) for d in dims.split("x"))))
            else:
                raise InvalidInput(f"{path}: unrecognized header line {line!r}")

        tensors = {}
        offset = 0
        for name, shape in entries:
            count = int(np.prod(shape))
            nbytes = 4 * count
            if offset + nbytes > len(payload):
                raise InvalidInput(f"{path}: truncated payload at tensor {name}")
            tensors[name] = np.frombuffer(
                payload[offset : offset + nbytes], dtype="<f4"
            ).reshape(shape).copy()
            offset += nbytes
        if offset != len(payload):
            raise InvalidInput(f"{path}: {len(payload) - offset} trailing payload bytes")
        return cls(tensors, fingerprint=fingerprint, seed=seed)


def _fan_in(name: str, shape: tuple[int, ...]) -> int:
    if name.endswith(".w_hh"):
        return shape[1]
    if len(shape) == 4:  # conv: (out, in, kt, kf)
        return shape[1] * shape[2] * shape[3]
    if len(shape) == 2:
        return shape[1]
    return max(shape[0], 1)


def init_random(cfg: ModelConfig, seed: int) -> ModelWeights:
    """Deterministic random weights: uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).

    Layer-norm gains are 1 and all layer-norm offsets 0. Same seed and
    config give a bit-identical container.
    """
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in required_shapes(cfg).items():
        layer, leaf = name.rsplit(".", 1)
        if leaf == "g" and ".ln_" in name:
            tensors[name] = np.ones(shape, dtype=np.float32)
            continue
        if leaf == "b" and ".ln_" in name:
            tensors[name] = np.zeros(shape, dtype=np.float32)
            continue
        if len(shape) == 1:
            # bias: bound from the owning layer's weight tensor
            sibling = _bias_sibling(name)
            ref_shape = required_shapes(cfg).get(sibling, shape)
            bound = 1.0 / np.sqrt(_fan_in(sibling, ref_shape))
        else:
            bound = 1.0 / np.sqrt(_fan_in(name, shape))
        tensors[name] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
    return ModelWeights(tensors, fingerprint=cfg.fingerprint(), seed=seed)


def _bias_sibling(bias_name: str) -> str:
    """Weight tensor whose fan-in scales the given bias tensor."""
    for suffix, repl in (
        (".b_ih", ".w_ih"),
        (".b_hh", ".w_hh"),
        (".b1", ".w1"),
        (".b2", ".w2"),
        (".bq", ".wq"),
        (".bk", ".wk"),
        (".bv", ".wv"),
        (".bo", ".wo"),
        (".b", ".w"),
    ):
        if bias_name.endswith(suffix):
            return bias_name[: -len(suffix)] + repl
    return bias_name
