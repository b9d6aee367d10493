"""Residual CNN predictor with optional lateral inhibition.

A network of depth K has a bare 3x3 conv stem, L = (K-2)/2 residual
modules and a fully connected head after global average pooling.  Each
module is

    relu( BN(LIL(conv2(relu(BN(conv1(x)))))) + shortcut(x) )

where conv1 carries the stride when a block downsamples and the shortcut
is a 1x1 projection (plus BN) whenever the shape changes.  The LIL sits
between conv2 and its batch norm; with use_lil=False the module is the
plain ResNet baseline and the graph is otherwise identical.

The pre-LIL output of conv2 is the level activation A^(l) that feeds the
explainer; it is captured at the same site for baseline models.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .lil import LilConfig, lil_backward, lil_forward
from .rng import substream

CHECKPOINT_MAGIC = b"XNET1\n"


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class Architecture:
    depth: int = 18
    stem_features: int = 16
    block_features: tuple[int, ...] = (16, 16, 16, 16)
    use_lil: bool = True
    lil_config: LilConfig = field(default_factory=LilConfig)
    num_classes: int = 10
    in_channels: int = 1

    @property
    def levels(self) -> int:
        if (self.depth - 2) % 2 != 0:
            raise ConfigurationError(f"depth {self.depth} gives non-integral level count")
        return (self.depth - 2) // 2

    def modules_per_block(self) -> int:
        n_blocks = len(self.block_features)
        if self.levels % n_blocks != 0:
            raise ConfigurationError(
                f"{self.levels} modules do not divide into {n_blocks} blocks")
        return self.levels // n_blocks

    @property
    def id(self) -> str:
        prefix = "R-ExplaiNet" if self.use_lil else "ResNet"
        if self.use_lil and self.lil_config.clip_input:
            prefix += "-C"
        feats = set(self.block_features)
        tag = str(self.block_features[0]) if len(feats) == 1 else \
            "-".join(str(f) for f in self.block_features)
        return f"{prefix}{self.depth}-{tag}"

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "stem_features": self.stem_features,
            "block_features": list(self.block_features),
            "use_lil": self.use_lil,
            "lil_clip": self.lil_config.clip_input,
            "lil_clip_range": list(self.lil_config.clip_range),
            "num_classes": self.num_classes,
            "in_channels": self.in_channels,
        }

    @staticmethod
    def from_dict(d: dict) -> "Architecture":
        return Architecture(
            depth=d["depth"],
            stem_features=d["stem_features"],
            block_features=tuple(d["block_features"]),
            use_lil=d["use_lil"],
            lil_config=LilConfig(d["lil_clip"], tuple(d["lil_clip_range"])),
            num_classes=d["num_classes"],
            in_channels=d.get("in_channels", 1),
        )


def architecture_from_id(name: str, depth: int, use_lil: bool = True,
                         clip: bool = False, num_classes: int = 10) -> Architecture:
    """Map a feature-setup id like 'R16' to an Architecture.

    'Rf' ids use f features in the stem and every block; 'R1' is the
    inverse-pyramid setup 16, 16, 16, 32, 64.
    """
    n_blocks = {18: 4, 22: 5, 26: 4}.get(depth)
    if n_blocks is None:
        raise ConfigurationError(f"unsupported depth {depth}")
    if name == "R1":
        if depth != 18:
            raise ConfigurationError("R1 feature setup is defined for depth 18")
        stem, blocks = 16, (16, 16, 32, 64)
    else:
        f = int(name.lstrip("R"))
        stem, blocks = f, (f,) * n_blocks
    return Architecture(depth=depth, stem_features=stem, block_features=blocks,
                        use_lil=use_lil, lil_config=LilConfig(clip_input=clip),
                        num_classes=num_classes)


@dataclass
class ModuleSpec:
    cin: int
    cout: int
    stride: int

    @property
    def has_projection(self) -> bool:
        return self.stride != 1 or self.cin != self.cout


class Model:
    """Parameter store plus explicit forward/backward for the whole net."""

    def __init__(self, arch: Architecture, dtype=np.float32):
        self.arch = arch
        self.dtype = dtype
        self.modules: list[ModuleSpec] = []
        per_block = arch.modules_per_block()
        cin = arch.stem_features
        for bi, feats in enumerate(arch.block_features):
            for mi in range(per_block):
                # stride-2 in the first module of every block after the first
                stride = 2 if (bi > 0 and mi == 0) else 1
                self.modules.append(ModuleSpec(cin, feats, stride))
                cin = feats
        self.params: dict[str, np.ndarray] = {}
        self.running: dict[str, np.ndarray] = {}
        self._declare()

    # ------------------------------------------------------------ layout

    def _declare(self):
        a = self.arch
        self._add_conv("stem", 3, a.in_channels, a.stem_features)
        for li, m in enumerate(self.modules):
            p = f"m{li}"
            self._add_conv(f"{p}.conv1", 3, m.cin, m.cout)
            self._add_bn(f"{p}.bn1", m.cout)
            self._add_conv(f"{p}.conv2", 3, m.cout, m.cout)
            self._add_bn(f"{p}.bn2", m.cout)
            if m.has_projection:
                self._add_conv(f"{p}.proj", 1, m.cin, m.cout)
                self._add_bn(f"{p}.bnp", m.cout)
        self._add_fc("head", self.modules[-1].cout, a.num_classes)

    def _add_conv(self, name, n, cin, cout):
        self.params[f"{name}.w"] = np.zeros((n, n, cin, cout), dtype=self.dtype)
        self.params[f"{name}.b"] = np.zeros(cout, dtype=self.dtype)

    def _add_bn(self, name, c):
        self.params[f"{name}.gamma"] = np.ones(c, dtype=self.dtype)
        self.params[f"{name}.beta"] = np.zeros(c, dtype=self.dtype)
        self.running[f"{name}.mean"] = np.zeros(c, dtype=self.dtype)
        self.running[f"{name}.var"] = np.ones(c, dtype=self.dtype)

    def _add_fc(self, name, cin, cout):
        self.params[f"{name}.w"] = np.zeros((cin, cout), dtype=self.dtype)
        self.params[f"{name}.b"] = np.zeros(cout, dtype=self.dtype)

    def init_weights(self, fold_seed: int):
        """Kaiming fan-in normal for conv/FC kernels, zero biases."""
        gen = substream(fold_seed, "init")
        for name, p in self.params.items():
            if name.endswith(".w"):
                fan_in = int(np.prod(p.shape[:-1]))
                p[...] = gen.normal(0.0, np.sqrt(2.0 / fan_in), size=p.shape)

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def decayed_parameter_names(self) -> list[str]:
        """Conv/FC kernels; weight decay skips biases and BN parameters."""
        return [n for n in self.params if n.endswith(".w")]

    # ----------------------------------------------------------- forward

    def forward(self, x: np.ndarray, mode: str = "infer",
                capture_levels: bool = False):
        """Returns (logits, level_activations, cache).

        level_activations[l] is the conv2 output (pre-LIL) of module l,
        one entry per level; empty unless capture_levels.  cache is None
        in infer mode without capture, otherwise feeds backward().
        """
        arch = self.arch
        P = self.params
        train = mode == "train"
        cache: dict = {"mode": mode}
        levels: list[np.ndarray] = []

        h = ops.conv2d(x, P["stem.w"], P["stem.b"])
        cache["stem_in"] = x
        mods = []
        for li, m in enumerate(self.modules):
            p = f"m{li}"
            mc: dict = {"in": h}
            c1 = ops.conv2d(h, P[f"{p}.conv1.w"], P[f"{p}.conv1.b"], stride=m.stride)
            b1, mc["bn1"] = ops.batch_norm(
                c1, P[f"{p}.bn1.gamma"], P[f"{p}.bn1.beta"],
                self.running[f"{p}.bn1.mean"], self.running[f"{p}.bn1.var"],
                "train" if train else "infer")
            r1 = ops.relu(b1)
            mc["b1"] = b1
            mc["r1"] = r1
            a = ops.conv2d(r1, P[f"{p}.conv2.w"], P[f"{p}.conv2.b"])
            if not np.all(np.isfinite(a)):
                raise FloatingPointError(f"non-finite activation at module {li}")
            mc["a"] = a
            if capture_levels:
                levels.append(a)
            z = lil_forward(a, arch.lil_config) if arch.use_lil else a
            b2, mc["bn2"] = ops.batch_norm(
                z, P[f"{p}.bn2.gamma"], P[f"{p}.bn2.beta"],
                self.running[f"{p}.bn2.mean"], self.running[f"{p}.bn2.var"],
                "train" if train else "infer")
            if m.has_projection:
                sp = ops.conv2d(h, P[f"{p}.proj.w"], P[f"{p}.proj.b"], stride=m.stride)
                sc, mc["bnp"] = ops.batch_norm(
                    sp, P[f"{p}.bnp.gamma"], P[f"{p}.bnp.beta"],
                    self.running[f"{p}.bnp.mean"], self.running[f"{p}.bnp.var"],
                    "train" if train else "infer")
            else:
                sc = h
            pre = b2 + sc
            h = ops.relu(pre)
            mc["pre"] = pre
            mods.append(mc)
        cache["mods"] = mods
        pooled = ops.global_avg_pool(h)
        cache["pooled"] = pooled
        cache["feat_shape"] = h.shape
        logits = ops.fully_connected(pooled, P["head.w"], P["head.b"])
        return logits, levels, cache

    # ---------------------------------------------------------- backward

    def backward(self, dlogits: np.ndarray, cache: dict) -> dict[str, np.ndarray]:
        P = self.params
        grads = {}
        dpool, grads["head.w"], grads["head.b"] = ops.fully_connected_backward(
            cache["pooled"], P["head.w"], dlogits)
        dh = ops.global_avg_pool_backward(dpool, cache["feat_shape"])
        for li in range(len(self.modules) - 1, -1, -1):
            m = self.modules[li]
            p = f"m{li}"
            mc = cache["mods"][li]
            dpre = ops.relu_backward(dh, mc["pre"])
            dz, grads[f"{p}.bn2.gamma"], grads[f"{p}.bn2.beta"] = \
                ops.batch_norm_backward(dpre, mc["bn2"])
            if self.arch.use_lil:
                da = lil_backward(dz, mc["a"], self.arch.lil_config)
            else:
                da = dz
            dr1, grads[f"{p}.conv2.w"], grads[f"{p}.conv2.b"] = ops.conv2d_backward(
                mc["r1"], P[f"{p}.conv2.w"], da)
            db1 = ops.relu_backward(dr1, mc["b1"])
            dc1, grads[f"{p}.bn1.gamma"], grads[f"{p}.bn1.beta"] = \
                ops.batch_norm_backward(db1, mc["bn1"])
            din, grads[f"{p}.conv1.w"], grads[f"{p}.conv1.b"] = ops.conv2d_backward(
                mc["in"], P[f"{p}.conv1.w"], dc1, stride=m.stride)
            if m.has_projection:
                dsp, grads[f"{p}.bnp.gamma"], grads[f"{p}.bnp.beta"] = \
                    ops.batch_norm_backward(dpre, cache["mods"][li]["bnp"])
                dsc, grads[f"{p}.proj.w"], grads[f"{p}.proj.b"] = ops.conv2d_backward(
                    mc["in"], P[f"{p}.proj.w"], dsp, stride=m.stride)
                din = din + dsc
            else:
                din = din + dpre
            dh = din
        _, grads["stem.w"], grads["stem.b"] = ops.conv2d_backward(
            cache["stem_in"], P["stem.w"], dh)
        return grads

    # -------------------------------------------------------- evaluation

    def predict(self, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
        out = []
        for i in range(0, len(images), batch_size):
            logits, _, _ = self.forward(images[i:i + batch_size].astype(self.dtype))
            out.append(np.argmax(logits, axis=1))
        return np.concatenate(out) if out else np.zeros(0, dtype=int)

    def level_grids(self, input_size: int = 28) -> list[tuple[int, int]]:
        grids = []
        h = input_size
        for m in self.modules:
            h = -(-h // m.stride)
            grids.append((h, h))
        return grids

    # ------------------------------------------------------- persistence

    def save(self, path):
        header = {
            "arch": self.arch.to_dict(),
            "dtype": np.dtype(self.dtype).str,
            "arrays": [],
        }
        buffers = []
        for group, store in (("params", self.params), ("running", self.running)):
            for name, arr in store.items():
                a = np.ascontiguousarray(arr)
                header["arrays"].append({"group": group, "name": name,
                                         "shape": list(a.shape),
                                         "dtype": a.dtype.newbyteorder("<").str})
                buffers.append(a.astype(a.dtype.newbyteorder("<")).tobytes())
        head = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(struct.pack("<I", len(head)))
            f.write(head)
            for b in buffers:
                f.write(b)

    @staticmethod
    def load(path) -> "Model":
        with open(path, "rb") as f:
            data = f.read()
        if not data.startswith(CHECKPOINT_MAGIC):
            raise ConfigurationError(f"{path}: not a checkpoint file")
        off = len(CHECKPOINT_MAGIC)
        (hlen,) = struct.unpack_from("<I", data, off)
        off += 4
        header = json.loads(data[off:off + hlen])
        off += hlen
        arch = Architecture.from_dict(header["arch"])
        model = Model(arch, dtype=np.dtype(header["dtype"]))
        stores = {"params": model.params, "running": model.running}
        for entry in header["arrays"]:
            store = stores[entry["group"]]
            if entry["name"] not in store:
                raise ConfigurationError(
                    f"checkpoint array {entry['name']} not in architecture {arch.id}")
            arr = store[entry["name"]]
            want = tuple(entry["shape"])
            if arr.shape != want:
                raise ConfigurationError(
                    f"{entry['name']}: checkpoint shape {want} vs model {arr.shape}")
            n = arr.size * np.dtype(entry["dtype"]).itemsize
            arr[...] = np.frombuffer(data[off:off + n],
                                     dtype=entry["dtype"]).reshape(want)
            off += n
        if off != len(data):
            raise ConfigurationError(f"{path}: trailing bytes in checkpoint")
        return model


def build(arch: Architecture, fold_seed: int = 0, dtype=np.float32) -> Model:
    model = Model(arch, dtype=dtype)
    model.init_weights(fold_seed)
    return model
