"""Feature extractor, label classifier and domain classifier networks.

All three are plain fully connected nets over the autodiff engine.  The
label classifier ends in a row-wise softmax, the domain classifier in a
sigmoid, and the domain head is reached through a gradient reversal
layer so that one backward pass trains the extractor adversarially.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .errors import ConfigError

FINAL_ACTIVATIONS = ("none", "softmax", "sigmoid")


@dataclass(frozen=True)
class MlpSpec:
    """Architecture descriptor for one fully connected network."""

    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int
    final_activation: str = "none"

    def __post_init__(self):
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(int(d) < 1 for d in dims):
            raise ConfigError(f"all layer dims must be >= 1, got {dims}")
        if self.final_activation not in FINAL_ACTIVATIONS:
            raise ConfigError(f"unknown final_activation {self.final_activation!r}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        return list(zip(dims[:-1], dims[1:]))


# The layer feeding a softmax starts near zero so that an untrained
# classifier emits near-uniform probabilities (and hence low transfer
# scores: nothing gets pseudo-labeled before training has begun).
SOFTMAX_HEAD_GAIN = 0.01


class Mlp:
    """Linear layers with ReLU after each hidden layer.

    Weights use He-style fan-in scaled uniform init, biases start at
    zero; the final layer of a softmax net is scaled down so its initial
    output is near-uniform.
    """

    def __init__(self, spec: MlpSpec, rng: np.random.Generator):
        self.spec = spec
        self.weights: list[Node] = []
        self.biases: list[Node] = []
        last = len(spec.layer_dims) - 1
        for i, (fan_in, fan_out) in enumerate(spec.layer_dims):
            bound = np.sqrt(6.0 / fan_in)
            if i == last and spec.final_activation == "softmax":
                bound *= SOFTMAX_HEAD_GAIN
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            self.weights.append(Node(w, op="leaf"))
            self.biases.append(Node(np.zeros(fan_out), op="leaf"))

    def forward(self, x: Node) -> Node:
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = ad.add_bias(ad.matmul(h, w), b)
            if i < last:
                h = ad.relu(h)
        if self.spec.final_activation == "softmax":
            h = ad.softmax_rows(h)
        elif self.spec.final_activation == "sigmoid":
            h = ad.sigmoid(h)
        return h

    def parameters(self, prefix: str) -> list[tuple[str, Node]]:
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out.append((f"{prefix}.w{i}", w))
            out.append((f"{prefix}.b{i}", b))
        return out


@dataclass
class ModelBundle:
    """The three networks plus the label-id mapping for the classifier head.

    ``class_ids[j]`` is the dataset class id that classifier output j
    stands for; the classifier always works in index space 0..K-1.
    """

    f: Mlp
    c: Mlp
    d: Mlp
    feature_dim: int
    num_source_classes: int
    class_ids: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not self.class_ids:
            self.class_ids = tuple(range(self.num_source_classes))
        if len(self.class_ids) != self.num_source_classes:
            raise ConfigError("class_ids length must equal num_source_classes")

    def parameters(self) -> list[tuple[str, Node]]:
        return (self.f.parameters("f") + self.c.parameters("c")
                + self.d.parameters("d"))

    def zero_grads(self) -> None:
        for _, p in self.parameters():
            p.zero_grad()


def init(spec_f: MlpSpec, spec_c: MlpSpec, spec_d: MlpSpec, seed: int,
         class_ids: tuple[int, ...] | None = None) -> ModelBundle:
    """Build all three networks from one seeded generator.

    The same seed always yields bit-identical parameters.
    """
    if spec_c.input_dim != spec_f.output_dim or spec_d.input_dim != spec_f.output_dim:
        raise ConfigError(
            f"classifier input dims ({spec_c.input_dim}, {spec_d.input_dim}) "
            f"must equal feature dim {spec_f.output_dim}")
    if spec_d.output_dim != 1:
        raise ConfigError("domain classifier must have output_dim 1")
    if spec_c.final_activation != "softmax":
        raise ConfigError("label classifier must end in softmax")
    if spec_d.final_activation != "sigmoid":
        raise ConfigError("domain classifier must end in sigmoid")
    rng = np.random.default_rng(seed)
    f = Mlp(spec_f, rng)
    c = Mlp(spec_c, rng)
    d = Mlp(spec_d, rng)
    return ModelBundle(f=f, c=c, d=d, feature_dim=spec_f.output_dim,
                       num_source_classes=spec_c.output_dim,
                       class_ids=tuple(class_ids or ()))


def features(m: ModelBundle, x: np.ndarray | Node) -> Node:
    if not isinstance(x, Node):
        x = Node(x, op="input")
    return m.f.forward(x)


def label_probs(m: ModelBundle, feats: Node) -> Node:
    """Class pseudo-probabilities from a feature node; rows sum to 1."""
    return m.c.forward(feats)


def domain_prob(m: ModelBundle, feats: Node, lam: float) -> Node:
    """Source-domain probability in (0,1), reached through the reversal layer.

    The reversal sits between the features and the domain net, so the
    domain net's own parameter gradients are unaffected while gradients
    flowing back into the extractor are negated and scaled by ``lam``.
    """
    return m.d.forward(ad.grad_reverse(feats, lam))


def forward_label(m: ModelBundle, x: np.ndarray) -> Node:
    return label_probs(m, features(m, x))


def forward_domain(m: ModelBundle, x: np.ndarray, lam: float) -> Node:
    return domain_prob(m, features(m, x), lam)


# ---------------------------------------------------------------------------
# checkpoint io: textual, hex-encoded floats, bit-exact round trip


def save_checkpoint(m: ModelBundle, path) -> None:
    """Write a deterministic text checkpoint (hex floats, named arrays)."""
    meta = {
        "feature_dim": m.feature_dim,
        "num_source_classes": m.num_source_classes,
        "class_ids": list(m.class_ids),
        "specs": {
            name: {"input_dim": s.input_dim, "hidden_dims": list(s.hidden_dims),
                   "output_dim": s.output_dim, "final_activation": s.final_activation}
            for name, s in (("f", m.f.spec), ("c", m.c.spec), ("d", m.d.spec))
        },
    }
    lines = [json.dumps(meta, sort_keys=True)]
    for name, p in m.parameters():
        shape = " ".join(str(s) for s in p.value.shape)
        lines.append(f"{name} {shape}")
        lines.append(" ".join(v.hex() for v in p.value.ravel()))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> ModelBundle:
    with open(path) as fh:
        lines = fh.read().splitlines()
    meta = json.loads(lines[0])
    specs = {
        name: MlpSpec(input_dim=s["input_dim"], hidden_dims=tuple(s["hidden_dims"]),
                      output_dim=s["output_dim"], final_activation=s["final_activation"])
        for name, s in meta["specs"].items()
    }
    m = init(specs["f"], specs["c"], specs["d"], seed=0,
             class_ids=tuple(meta["class_ids"]))
    params = dict(m.parameters())
    i = 1
    while i < len(lines):
        header = lines[i].split()
        name, shape = header[0], tuple(int(s) for s in header[1:])
        vals = np.array([float.fromhex(t) for t in lines[i + 1].split()])
        params[name].value[...] = vals.reshape(shape)
        i += 2
    return m
