"""Dense multilayer perceptrons with explicit tapes and accumulating grads.

Every network in the model (actors, message generators, coordinator, critic,
gating heads) is an Mlp over a ParamStore; gradients flow across networks by
chaining the input-gradients returned from backward().
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Raised on any layer/input dimension mismatch."""


class NonFiniteError(FloatingPointError):
    """Raised when a parameter, activation or gradient goes NaN/Inf."""


_HIDDEN_ACTS = {"tanh": kernels.ACT_TANH, "relu": kernels.ACT_RELU}
# "bounded" is the (0,1)-range output used for actions; numerically a sigmoid
_OUTPUT_ACTS = {
    "identity": kernels.ACT_IDENTITY,
    "sigmoid": kernels.ACT_SIGMOID,
    "bounded": kernels.ACT_SIGMOID,
    "tanh": kernels.ACT_TANH,
}


@dataclass(frozen=True)
class MlpSpec:
    """Layer sizes (input first, output last) plus activation choices."""

    sizes: tuple
    hidden_activation: str = "tanh"
    output_activation: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if len(self.sizes) < 2:
            raise ShapeError(f"need at least one weight layer, got sizes={self.sizes}")
        if any(s < 1 for s in self.sizes):
            raise ShapeError(f"all layer sizes must be >= 1, got {self.sizes}")
        if self.hidden_activation not in _HIDDEN_ACTS:
            raise ValueError(f"hidden activation must be one of {sorted(_HIDDEN_ACTS)}")
        if self.output_activation not in _OUTPUT_ACTS:
            raise ValueError(f"output activation must be one of {sorted(_OUTPUT_ACTS)}")

    @property
    def in_dim(self):
        return self.sizes[0]

    @property
    def out_dim(self):
        return self.sizes[-1]


@dataclass
class Layer:
    W: np.ndarray
    b: np.ndarray
    gW: np.ndarray = field(default=None)
    gb: np.ndarray = field(default=None)
    mW: np.ndarray = field(default=None)
    vW: np.ndarray = field(default=None)
    mb: np.ndarray = field(default=None)
    vb: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ("gW", "mW", "vW"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros_like(self.W))
        for name in ("gb", "mb", "vb"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros_like(self.b))


class ParamStore:
    """Ordered (weight, bias) layers with matching gradient/moment buffers."""

    def __init__(self, layers, name="net"):
        self.layers = list(layers)
        self.name = name
        self.adam_t = 0  # 1-based after first optimizer step

    @classmethod
    def for_sizes(cls, sizes, rng, name="net"):
        """Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
        layers = []
        for nin, nout in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(nin)
            W = rng.uniform(-bound, bound, size=(nout, nin))
            b = rng.uniform(-bound, bound, size=nout)
            layers.append(Layer(W, b))
        return cls(layers, name=name)

    def zero_grad(self):
        for lay in self.layers:
            lay.gW.fill(0.0)
            lay.gb.fill(0.0)

    def param_arrays(self):
        for k, lay in enumerate(self.layers):
            yield f"{self.name}.layer{k}.W", lay.W, lay.gW
            yield f"{self.name}.layer{k}.b", lay.b, lay.gb

    def n_params(self):
        return sum(lay.W.size + lay.b.size for lay in self.layers)

    def check_finite(self):
        for pname, P, _ in self.param_arrays():
            if not np.isfinite(P).all():
                raise NonFiniteError(f"non-finite values in {pname}")


def copy_to_target(source: ParamStore, target: ParamStore):
    """Hard copy of parameters; target stays isolated from later updates."""
    if len(source.layers) != len(target.layers):
        raise ShapeError(
            f"layer count mismatch: {len(source.layers)} vs {len(target.layers)}")
    for k, (src, dst) in enumerate(zip(source.layers, target.layers)):
        if src.W.shape != dst.W.shape or src.b.shape != dst.b.shape:
            raise ShapeError(f"shape mismatch at layer {k}: "
                             f"{src.W.shape} vs {dst.W.shape}")
        dst.W[...] = src.W
        dst.b[...] = src.b


class Mlp:
    """An MlpSpec bound to a ParamStore, with tape-based backward."""

    def __init__(self, spec: MlpSpec, store: ParamStore):
        if len(store.layers) != len(spec.sizes) - 1:
            raise ShapeError("store layer count does not match spec")
        for k, (lay, nin, nout) in enumerate(
                zip(store.layers, spec.sizes[:-1], spec.sizes[1:])):
            if lay.W.shape != (nout, nin):
                raise ShapeError(
                    f"layer {k}: expected W shape {(nout, nin)}, got {lay.W.shape}")
        self.spec = spec
        self.store = store
        acts = [_HIDDEN_ACTS[spec.hidden_activation]] * (len(spec.sizes) - 2)
        acts.append(_OUTPUT_ACTS[spec.output_activation])
        self._act_ids = acts

    @classmethod
    def create(cls, spec, rng, name="net"):
        return cls(spec, ParamStore.for_sizes(spec.sizes, rng, name=name))

    def forward(self, x):
        """Returns (output, tape). Accepts a vector or a (B, in_dim) batch."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        X = np.ascontiguousarray(x.reshape(1, -1) if single else x)
        if X.shape[1] != self.spec.in_dim:
            raise ShapeError(
                f"{self.store.name}: input dim {X.shape[1]} != "
                f"expected {self.spec.in_dim} (layer 0)")
        inputs, acts = [], []
        A = X
        for lay, act_id in zip(self.store.layers, self._act_ids):
            inputs.append(A)
            Z = kernels.affine_forward(A, lay.W, lay.b)
            A = kernels.act_forward(Z, act_id)
            acts.append(A)
        if not np.isfinite(A).all():
            raise NonFiniteError(f"non-finite activation in {self.store.name}")
        tape = _Tape(inputs, acts, single)
        return (A[0] if single else A), tape

    def backward(self, tape, upstream):
        """Accumulate parameter grads from the tape; return grad w.r.t. input."""
        if tape is None:
            raise ShapeError(f"{self.store.name}: backward without a forward tape")
        up = np.asarray(upstream, dtype=np.float64)
        if tape.single:
            up = up.reshape(1, -1)
        if up.shape != tape.acts[-1].shape:
            raise ShapeError(
                f"{self.store.name}: upstream shape {up.shape} != "
                f"output shape {tape.acts[-1].shape}")
        dA = np.ascontiguousarray(up)
        for k in range(len(self.store.layers) - 1, -1, -1):
            lay = self.store.layers[k]
            dZ = kernels.act_backward(tape.acts[k], dA, self._act_ids[k])
            dA = kernels.affine_backward(tape.inputs[k], lay.W, dZ, lay.gW, lay.gb)
        return dA[0] if tape.single else dA


class _Tape:
    __slots__ = ("inputs", "acts", "single")

    def __init__(self, inputs, acts, single):
        self.inputs = inputs
        self.acts = acts
        self.single = single
