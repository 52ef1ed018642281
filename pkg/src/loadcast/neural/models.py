"""The ten forecasting architectures over paired booking sequences.

Single-stream variants consume one tensor: the flight's own window
(SLSTM-H), the route-history window (SLSTM-V), or their time-aligned
feature concatenation (SLSTM-C). Dual variants run two recurrent
branches in parallel and differ in how branch outputs meet:

* DLSTM        last hidden states, concatenated
* DLSTM-SA     self-attention within each branch, mean-pooled, concatenated
* DLSTM-CA     each branch attends over the other, pooled, concatenated
* DLSTM-HA     self-attention first, then cross-attention, pooled, concatenated
* DLSTM-HARF   hybrid attention plus per-branch residual to the raw branch output
* DLSTM-HAGF   hybrid attention fused by a learned sigmoid gate
* DLSTM-HAGFRF gate fusion plus both residual paths

Pooled representations pass through dropout and a rectified dense head
to one linear output in load-factor percentage points.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import IllegalSpec, NumericError, ShapeMismatch
from .layers import LSTM, Dense, Dropout, GatedFusion, MeanPool, ScaledDotAttention

VARIANTS = (
    "SLSTM-H",
    "SLSTM-V",
    "SLSTM-C",
    "DLSTM",
    "DLSTM-SA",
    "DLSTM-CA",
    "DLSTM-HA",
    "DLSTM-HAGF",
    "DLSTM-HARF",
    "DLSTM-HAGFRF",
)

SINGLE_STREAM = frozenset({"SLSTM-H", "SLSTM-V", "SLSTM-C"})
ATTENTION = frozenset(
    {"DLSTM-SA", "DLSTM-CA", "DLSTM-HA", "DLSTM-HAGF", "DLSTM-HARF", "DLSTM-HAGFRF"}
)
HYBRID = frozenset({"DLSTM-HA", "DLSTM-HAGF", "DLSTM-HARF", "DLSTM-HAGFRF"})
GATED = frozenset({"DLSTM-HAGF", "DLSTM-HAGFRF"})
RESIDUAL = frozenset({"DLSTM-HARF", "DLSTM-HAGFRF"})


@dataclass(frozen=True)
class ModelSpec:
    """Architecture and optimiser configuration for one variant."""

    variant: str
    h_features: int = 8
    v_features: int = 9
    h_units: tuple[int, ...] = ()
    v_units: tuple[int, ...] = ()
    dense_units: tuple[int, ...] = (32,)
    dropout: float = 0.1
    optimizer: str = "adam"
    learning_rate: float = 0.004337

    def __post_init__(self) -> None:
        object.__setattr__(self, "h_units", tuple(self.h_units))
        object.__setattr__(self, "v_units", tuple(self.v_units))
        object.__setattr__(self, "dense_units", tuple(self.dense_units))
        if self.variant not in VARIANTS:
            raise IllegalSpec(f"unknown variant {self.variant!r}")
        if self.variant in ("SLSTM-H", "SLSTM-C"):
            if not self.h_units or self.v_units:
                raise IllegalSpec(f"{self.variant} uses exactly one stack (h_units)")
        elif self.variant == "SLSTM-V":
            if not self.v_units or self.h_units:
                raise IllegalSpec("SLSTM-V uses exactly one stack (v_units)")
        else:
            if not self.h_units or not self.v_units:
                raise IllegalSpec(f"{self.variant} needs both branch stacks")
        if self.variant in ATTENTION and self.h_units[-1] != self.v_units[-1]:
            raise IllegalSpec(
                f"attention variants need equal branch widths, got "
                f"{self.h_units[-1]} vs {self.v_units[-1]}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise IllegalSpec(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.optimizer not in ("adam", "rmsprop"):
            raise IllegalSpec(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate <= 0:
            raise IllegalSpec("learning rate must be positive")

    @classmethod
    def for_variant(cls, variant: str, h_features: int = 8, v_features: int = 9,
                    **overrides) -> "ModelSpec":
        """Stock configuration for a variant.

        Base models carry their tuned settings; attention and fusion
        variants share 64-unit branches, 0.3 dropout, a (128, 32) head,
        and the dual-stream base optimiser.
        """
        base: dict = {"variant": variant, "h_features": h_features, "v_features": v_features}
        if variant == "SLSTM-H":
            base.update(h_units=(96, 96), dropout=0.1, dense_units=(32,),
                        optimizer="adam", learning_rate=0.004337)
        elif variant == "SLSTM-V":
            base.update(v_units=(128,), dropout=0.1, dense_units=(32,),
                        optimizer="rmsprop", learning_rate=0.001318)
        elif variant == "SLSTM-C":
            base.update(h_units=(128,), dropout=0.1, dense_units=(32,),
                        optimizer="rmsprop", learning_rate=0.001318)
        elif variant == "DLSTM":
            base.update(h_units=(96, 32), v_units=(96, 32), dropout=0.1,
                        dense_units=(32,), optimizer="adam", learning_rate=0.004337)
        else:
            base.update(h_units=(64,), v_units=(64,), dropout=0.3,
                        dense_units=(128, 32), optimizer="adam", learning_rate=0.004337)
        base.update(overrides)
        return cls(**base)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        raw = json.loads(text)
        for key in ("h_units", "v_units", "dense_units"):
            raw[key] = tuple(raw[key])
        return cls(**raw)


def _build_stack(prefix: str, input_size: int, units: tuple[int, ...],
                 rng: np.random.Generator, final_sequence: bool) -> list[tuple[str, LSTM]]:
    stack = []
    size = input_size
    for depth, hidden in enumerate(units):
        last = depth == len(units) - 1
        stack.append(
            (f"{prefix}{depth}", LSTM(size, hidden, rng, return_sequence=(not last) or final_sequence))
        )
        size = hidden
    return stack


class Model:
    """One trainable instance of a ModelSpec with analytic gradients.

    forward() caches the activations backward() consumes, so calls must
    alternate; backward() accumulates into each layer's gradient
    buffers until zero_grads().
    """

    def __init__(self, spec: ModelSpec, seed: int = 0) -> None:
        self.spec = spec
        rng = np.random.default_rng(seed)
        variant = spec.variant
        sequence_out = variant in ATTENTION

        self.h_stack: list[tuple[str, LSTM]] = []
        self.v_stack: list[tuple[str, LSTM]] = []
        if variant == "SLSTM-H":
            self.h_stack = _build_stack("lstm", spec.h_features, spec.h_units, rng, False)
            head_width = spec.h_units[-1]
        elif variant == "SLSTM-V":
            self.v_stack = _build_stack("lstm", spec.v_features, spec.v_units, rng, False)
            head_width = spec.v_units[-1]
        elif variant == "SLSTM-C":
            self.h_stack = _build_stack(
                "lstm", spec.h_features + spec.v_features, spec.h_units, rng, False
            )
            head_width = spec.h_units[-1]
        else:
            self.h_stack = _build_stack("h_lstm", spec.h_features, spec.h_units, rng, sequence_out)
            self.v_stack = _build_stack("v_lstm", spec.v_features, spec.v_units, rng, sequence_out)
            if variant in GATED:
                head_width = spec.h_units[-1]
            else:
                head_width = spec.h_units[-1] + spec.v_units[-1]

        self.gate = GatedFusion(spec.h_units[-1], rng) if variant in GATED else None

        self.head: list[tuple[str, Dense]] = []
        width = head_width
        for depth, units in enumerate(spec.dense_units):
            self.head.append((f"dense{depth}", Dense(width, units, rng, relu=True)))
            width = units
        self.head.append(("output", Dense(width, 1, rng, relu=False)))

        self.dropout = Dropout(spec.dropout, rng)

        self._attn: dict[str, ScaledDotAttention] = {}
        if variant in ATTENTION:
            if variant == "DLSTM-SA" or variant in HYBRID:
                self._attn["h_self"] = ScaledDotAttention()
                self._attn["v_self"] = ScaledDotAttention()
            if variant == "DLSTM-CA" or variant in HYBRID:
                self._attn["h_cross"] = ScaledDotAttention()
                self._attn["v_cross"] = ScaledDotAttention()
        self._pools = {name: MeanPool() for name in ("h", "v", "h_orig", "v_orig")}
        self._tape: dict = {}

        self._layers: list[tuple[str, object]] = []
        self._layers.extend(self.h_stack)
        self._layers.extend(self.v_stack)
        if self.gate is not None:
            self._layers.append(("gate", self.gate))
        self._layers.extend(self.head)

    # -- parameter access ------------------------------------------------

    def named_parameters(self) -> list[tuple[str, np.ndarray, np.ndarray]]:
        out = []
        for layer_name, layer in self._layers:
            for key in sorted(layer.params):
                out.append((f"{layer_name}/{key}", layer.params[key], layer.grads[key]))
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: value.copy() for name, value, _ in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for layer_name, layer in self._layers:
            for key in layer.params:
                qualified = f"{layer_name}/{key}"
                if qualified not in state:
                    raise KeyError(f"missing parameter {qualified}")
                if state[qualified].shape != layer.params[key].shape:
                    raise ShapeMismatch(f"{qualified}: {state[qualified].shape}")
                layer.params[key] = state[qualified].copy()

    def zero_grads(self) -> None:
        for _, layer in self._layers:
            layer.zero_grads()

    def parameter_count(self) -> int:
        return sum(layer.parameter_count() for _, layer in self._layers)

    # -- forward ---------------------------------------------------------

    def _run_stack(self, stack, x):
        for _, layer in stack:
            x = layer.forward(x)
        return x

    def _stack_backward(self, stack, dout):
        for _, layer in reversed(stack):
            dout = layer.backward(dout)
        return dout

    def _concat_streams(self, xh, xv):
        """Time-aligned feature concatenation, zero-filling the shorter
        stream's missing oldest steps."""
        steps = max(xh.shape[1], xv.shape[1])
        batch = xh.shape[0]

        def pad(x):
            if x.shape[1] == steps:
                return x
            padding = np.zeros((batch, steps - x.shape[1], x.shape[2]))
            return np.concatenate([padding, x], axis=1)

        self._tape["concat_shapes"] = (xh.shape, xv.shape, steps)
        return np.concatenate([pad(xh), pad(xv)], axis=2)

    def forward(self, xh: np.ndarray | None, xv: np.ndarray | None,
                training: bool = False) -> np.ndarray:
        spec = self.spec
        variant = spec.variant
        if variant != "SLSTM-V":
            if xh is None or xh.ndim != 3 or xh.shape[2] != spec.h_features:
                raise ShapeMismatch(f"{variant} wants horizontal (B, T, {spec.h_features})")
        if variant != "SLSTM-H":
            if xv is None or xv.ndim != 3 or xv.shape[2] != spec.v_features:
                raise ShapeMismatch(f"{variant} wants vertical (B, T, {spec.v_features})")

        if variant == "SLSTM-H":
            fused = self._run_stack(self.h_stack, xh)
        elif variant == "SLSTM-V":
            fused = self._run_stack(self.v_stack, xv)
        elif variant == "SLSTM-C":
            fused = self._run_stack(self.h_stack, self._concat_streams(xh, xv))
        elif variant == "DLSTM":
            zh = self._run_stack(self.h_stack, xh)
            zv = self._run_stack(self.v_stack, xv)
            self._tape["widths"] = (zh.shape[1], zv.shape[1])
            fused = np.concatenate([zh, zv], axis=1)
        else:
            hs = self._run_stack(self.h_stack, xh)
            vs = self._run_stack(self.v_stack, xv)
            if variant == "DLSTM-SA":
                ha = self._attn["h_self"].forward(hs, hs, hs)
                va = self._attn["v_self"].forward(vs, vs, vs)
            elif variant == "DLSTM-CA":
                ha = self._attn["h_cross"].forward(hs, vs, vs)
                va = self._attn["v_cross"].forward(vs, hs, hs)
            else:
                h_self = self._attn["h_self"].forward(hs, hs, hs)
                v_self = self._attn["v_self"].forward(vs, vs, vs)
                ha = self._attn["h_cross"].forward(h_self, v_self, v_self)
                va = self._attn["v_cross"].forward(v_self, h_self, h_self)
            ph = self._pools["h"].forward(ha)
            pv = self._pools["v"].forward(va)
            if variant in RESIDUAL:
                ph_orig = self._pools["h_orig"].forward(hs)
                pv_orig = self._pools["v_orig"].forward(vs)
            if variant == "DLSTM-HARF":
                self._tape["widths"] = (ph.shape[1], pv.shape[1])
                fused = np.concatenate([ph + ph_orig, pv + pv_orig], axis=1)
            elif variant == "DLSTM-HAGF":
                fused = self.gate.forward(ph, pv)
            elif variant == "DLSTM-HAGFRF":
                fused = self.gate.forward(ph, pv) + ph_orig + pv_orig
            else:
                self._tape["widths"] = (ph.shape[1], pv.shape[1])
                fused = np.concatenate([ph, pv], axis=1)

        dropped = self.dropout.forward(fused, training)
        out = dropped
        for _, layer in self.head:
            out = layer.forward(out)
        preds = out[:, 0]
        if not np.isfinite(preds).all():
            raise NumericError(f"{variant}: non-finite prediction")
        return preds

    # -- backward ----------------------------------------------------------

    def backward(self, dpreds: np.ndarray) -> None:
        """Accumulate parameter gradients given d(loss)/d(prediction)."""
        variant = self.spec.variant
        dout = dpreds[:, None]
        for _, layer in reversed(self.head):
            dout = layer.backward(dout)
        dfused = self.dropout.backward(dout)

        if variant == "SLSTM-H":
            self._stack_backward(self.h_stack, dfused)
        elif variant == "SLSTM-V":
            self._stack_backward(self.v_stack, dfused)
        elif variant == "SLSTM-C":
            self._stack_backward(self.h_stack, dfused)
        elif variant == "DLSTM":
            wh, _ = self._tape["widths"]
            self._stack_backward(self.h_stack, dfused[:, :wh])
            self._stack_backward(self.v_stack, dfused[:, wh:])
        else:
            dhs_extra = None
            dvs_extra = None
            if variant == "DLSTM-HARF":
                wh, _ = self._tape["widths"]
                dph, dpv = dfused[:, :wh], dfused[:, wh:]
                dhs_extra = self._pools["h_orig"].backward(dph)
                dvs_extra = self._pools["v_orig"].backward(dpv)
            elif variant == "DLSTM-HAGF":
                dph, dpv = self.gate.backward(dfused)
            elif variant == "DLSTM-HAGFRF":
                dph, dpv = self.gate.backward(dfused)
                dhs_extra = self._pools["h_orig"].backward(dfused)
                dvs_extra = self._pools["v_orig"].backward(dfused)
            else:
                wh, _ = self._tape["widths"]
                dph, dpv = dfused[:, :wh], dfused[:, wh:]

            dha = self._pools["h"].backward(dph)
            dva = self._pools["v"].backward(dpv)

            if variant == "DLSTM-SA":
                dq, dk, dv = self._attn["h_self"].backward(dha)
                dhs = dq + dk + dv
                dq, dk, dv = self._attn["v_self"].backward(dva)
                dvs = dq + dk + dv
            elif variant == "DLSTM-CA":
                dqh, dkv, dvv = self._attn["h_cross"].backward(dha)
                dqv, dkh, dvh = self._attn["v_cross"].backward(dva)
                dhs = dqh + dkh + dvh
                dvs = dqv + dkv + dvv
            else:
                dqh, dkv, dvv = self._attn["h_cross"].backward(dha)
                dqv, dkh, dvh = self._attn["v_cross"].backward(dva)
                dh_self = dqh + dkh + dvh
                dv_self = dqv + dkv + dvv
                dq, dk, dv = self._attn["h_self"].backward(dh_self)
                dhs = dq + dk + dv
                dq, dk, dv = self._attn["v_self"].backward(dv_self)
                dvs = dq + dk + dv

            if dhs_extra is not None:
                dhs = dhs + dhs_extra
                dvs = dvs + dvs_extra
            self._stack_backward(self.h_stack, dhs)
            self._stack_backward(self.v_stack, dvs)

    def active_patterns(self) -> list[np.ndarray]:
        """Rectifier sign patterns from the last forward pass.

        Finite-difference checks compare these between the two probe
        points; a flipped sign means the probe straddled a kink where
        the loss is not differentiable.
        """
        patterns = []
        for _, layer in self.head:
            pattern = layer.active_pattern()
            if pattern is not None:
                patterns.append(pattern)
        return patterns

    def predict(self, xh: np.ndarray | None, xv: np.ndarray | None,
                batch_size: int = 1024) -> np.ndarray:
        """Inference forward in slices; never consumes dropout draws."""
        count = len(xh) if xh is not None else len(xv)
        chunks = []
        for start in range(0, count, batch_size):
            stop = start + batch_size
            chunks.append(
                self.forward(
                    None if xh is None else xh[start:stop],
                    None if xv is None else xv[start:stop],
                    training=False,
                )
            )
        return np.concatenate(chunks)
