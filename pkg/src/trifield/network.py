"""Network data model for tri-field spiking networks.

A network is a set of integer-potential neurons exchanging excitatory and
inhibitory spikes at Poisson rates.  Input neurons are grouped into three
streams by the kind of signal they carry:

* ``RF``  -- the driving sensory stream,
* ``LCF`` -- the modulatory cross-modal stream,
* ``UCF`` -- the environment / awareness stream (typically one-hot).

Connectivity follows two rules: every input-layer unit is laterally
connected to all units of the *other* streams in the same layer, and every
unit feeds forward to all units of the next layer.  Each directed synapse
(y, w) carries two nonnegative rates, ``w_plus[y, w]`` for excitatory and
``w_neg[y, w]`` for inhibitory transmission.

For a neuron y with departure probability d(y) < 1 the firing rate is tied
to its outgoing rates by

    r(y) * (1 - d(y)) = sum_w [w_plus(y, w) + w_neg(y, w)]

so that the routing probabilities P+-(y, w) = w+-(y, w) / r(y) together with
d(y) sum to one.  Neurons with no outgoing synapses (the prediction sinks)
have d = 1 and a free configured firing rate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "FieldKind",
    "Neuron",
    "Network",
    "ExogenousDrive",
    "TopologySpec",
    "BuildError",
    "Violation",
    "build_network",
    "validate",
    "derive_rates",
    "prune_streams",
    "network_to_dict",
    "network_from_dict",
    "save_network",
    "load_network",
]

#: Tolerance for the rate-balance and routing-normalization identities.
BALANCE_TOL = 1e-12

INPUT_STREAMS = ("RF", "LCF", "UCF")


class FieldKind(str, Enum):
    """Role of a neuron: one of the three input streams, hidden, or sink."""

    RF = "RF"
    LCF = "LCF"
    UCF = "UCF"
    INTERNAL = "Internal"
    OUTPUT = "Output"

    @property
    def is_input(self) -> bool:
        return self in (FieldKind.RF, FieldKind.LCF, FieldKind.UCF)


@dataclass(frozen=True)
class Neuron:
    """Static metadata of one unit.

    ``stream`` is the input-stream index (0=RF, 1=LCF, 2=UCF) for
    input-layer units and -1 for hidden/output units.
    """

    id: int
    field: FieldKind
    layer: int
    stream: int


class BuildError(ValueError):
    """Raised for an inconsistent topology description; names the bad field."""


@dataclass(frozen=True)
class TopologySpec:
    """Description of a layered three-stream topology.

    Layer 0 holds the three input streams side by side; ``hidden`` lists the
    sizes of the intermediate layers; the final layer holds ``outputs`` sink
    neurons.  A stream may be empty (its width set to 0) so that reduced
    single- or two-stream networks can be built, but the input layer as a
    whole and every later layer must be nonempty.
    """

    rf: int = 8
    lcf: int = 8
    ucf: int = 5
    hidden: tuple[int, ...] = (7,)
    outputs: int = 1
    rate: float = 1.0
    sink_rate: float = 1.0
    weight_init: tuple[float, float] = (0.05, 0.25)
    seed: int = 0

    def check(self) -> None:
        for name in ("rf", "lcf", "ucf"):
            if getattr(self, name) < 0:
                raise BuildError(f"stream width '{name}' must be >= 0, got {getattr(self, name)}")
        if self.rf + self.lcf + self.ucf < 1:
            raise BuildError("input layer is empty: rf + lcf + ucf must be >= 1")
        for i, h in enumerate(self.hidden):
            if h < 1:
                raise BuildError(f"hidden[{i}] must be >= 1, got {h}")
        if self.outputs < 1:
            raise BuildError(f"outputs must be >= 1, got {self.outputs}")
        if self.rate <= 0 or self.sink_rate <= 0:
            raise BuildError("rate and sink_rate must be > 0")
        lo, hi = self.weight_init
        if not (0 <= lo <= hi):
            raise BuildError(f"weight_init range must satisfy 0 <= lo <= hi, got {self.weight_init}")


@dataclass
class Network:
    """Immutable-by-convention network value.

    All mutation during training goes through :func:`trifield.training.train`,
    which works on copies; shared instances should be treated as read-only.
    """

    neurons: list[Neuron]
    w_plus: np.ndarray
    w_neg: np.ndarray
    r: np.ndarray
    d: np.ndarray

    @property
    def n(self) -> int:
        return len(self.neurons)

    def ids_of(self, kind: FieldKind) -> np.ndarray:
        return np.array([u.id for u in self.neurons if u.field == kind], dtype=int)

    @property
    def output_ids(self) -> np.ndarray:
        return self.ids_of(FieldKind.OUTPUT)

    @property
    def input_ids(self) -> np.ndarray:
        return np.array([u.id for u in self.neurons if u.field.is_input], dtype=int)

    def allowed_edges(self) -> np.ndarray:
        """Boolean adjacency implied by the topology rule.

        Edge (i, j) is legal iff i and j sit in the same layer but different
        input streams (lateral cross-stream modulation), or j is in the layer
        directly after i (feed-forward).
        """
        layer = np.array([u.layer for u in self.neurons])
        stream = np.array([u.stream for u in self.neurons])
        same_layer = layer[:, None] == layer[None, :]
        cross_stream = (
            same_layer
            & (stream[:, None] >= 0)
            & (stream[None, :] >= 0)
            & (stream[:, None] != stream[None, :])
        )
        feed_forward = layer[None, :] == layer[:, None] + 1
        return cross_stream | feed_forward

    def routing_probabilities(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-synapse routing probabilities (P+, P-) = (w+, w-) / r."""
        return self.w_plus / self.r[:, None], self.w_neg / self.r[:, None]

    def copy(self) -> "Network":
        return Network(
            neurons=list(self.neurons),
            w_plus=self.w_plus.copy(),
            w_neg=self.w_neg.copy(),
            r=self.r.copy(),
            d=self.d.copy(),
        )


@dataclass
class ExogenousDrive:
    """Poisson arrival rates of external excitatory/inhibitory spikes."""

    lambda_plus: np.ndarray
    lambda_neg: np.ndarray

    @classmethod
    def zero(cls, n: int) -> "ExogenousDrive":
        return cls(np.zeros(n), np.zeros(n))

    def check(self, network: Network) -> None:
        n = network.n
        if self.lambda_plus.shape != (n,) or self.lambda_neg.shape != (n,):
            raise ValueError(
                f"drive shape mismatch: network has {n} neurons, "
                f"drive has {self.lambda_plus.shape}/{self.lambda_neg.shape}"
            )
        if np.any(self.lambda_plus < 0) or np.any(self.lambda_neg < 0):
            raise ValueError("exogenous rates must be nonnegative")
        non_input = np.array([not u.field.is_input for u in network.neurons])
        if np.any(self.lambda_plus[non_input] != 0) or np.any(self.lambda_neg[non_input] != 0):
            bad = int(np.nonzero(non_input & ((self.lambda_plus != 0) | (self.lambda_neg != 0)))[0][0])
            raise ValueError(f"exogenous drive on non-input neuron {bad}")


@dataclass(frozen=True)
class Violation:
    """One invariant failure, naming the offending neuron(s) and residual."""

    kind: str
    where: tuple[int, ...]
    residual: float
    message: str

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.message


def _layout_neurons(spec: TopologySpec) -> list[Neuron]:
    neurons: list[Neuron] = []
    nid = 0
    for stream, (kind, width) in enumerate(
        zip((FieldKind.RF, FieldKind.LCF, FieldKind.UCF), (spec.rf, spec.lcf, spec.ucf))
    ):
        for _ in range(width):
            neurons.append(Neuron(nid, kind, 0, stream))
            nid += 1
    for li, width in enumerate(spec.hidden, start=1):
        for _ in range(width):
            neurons.append(Neuron(nid, FieldKind.INTERNAL, li, -1))
            nid += 1
    out_layer = len(spec.hidden) + 1
    for _ in range(spec.outputs):
        neurons.append(Neuron(nid, FieldKind.OUTPUT, out_layer, -1))
        nid += 1
    return neurons


def derive_rates(network: Network) -> None:
    """Re-derive firing rates from the outgoing weights, in place.

    For neurons with d < 1, r = total outgoing rate / (1 - d); sink rates
    (d == 1) are left untouched.  Call after any weight update so the rate
    balance and routing normalization stay exact.
    """
    out = network.w_plus.sum(axis=1) + network.w_neg.sum(axis=1)
    live = network.d < 1.0
    network.r[live] = out[live] / (1.0 - network.d[live])


def build_network(spec: TopologySpec) -> Network:
    """Construct a network from a topology description.

    Weights on every legal edge are drawn uniformly from the configured init
    range, then each neuron's outgoing total is capped at its configured
    firing rate (the row is rescaled if it exceeds the cap); the leftover
    probability mass becomes the departure probability.  Deterministic for a
    fixed seed.
    """
    spec.check()
    neurons = _layout_neurons(spec)
    n = len(neurons)
    rng = np.random.default_rng(spec.seed)
    net = Network(
        neurons=neurons,
        w_plus=np.zeros((n, n)),
        w_neg=np.zeros((n, n)),
        r=np.full(n, spec.rate, dtype=float),
        d=np.zeros(n),
    )
    mask = net.allowed_edges()
    lo, hi = spec.weight_init
    net.w_plus[mask] = rng.uniform(lo, hi, size=int(mask.sum()))
    net.w_neg[mask] = rng.uniform(lo, hi, size=int(mask.sum()))

    out = net.w_plus.sum(axis=1) + net.w_neg.sum(axis=1)
    for i in range(n):
        if not mask[i].any():
            # sink: nothing leaves through synapses
            net.d[i] = 1.0
            net.r[i] = spec.sink_rate
            continue
        if out[i] > spec.rate:
            scale = spec.rate / out[i]
            net.w_plus[i] *= scale
            net.w_neg[i] *= scale
            out[i] = spec.rate
        net.d[i] = 1.0 - out[i] / spec.rate
    derive_rates(net)
    return net


def validate(network: Network) -> list[Violation]:
    """Check every structural invariant; empty list means the network is valid.

    Diagnostic only -- never raises.  Each violation names the neuron (or
    synapse endpoints) and the numerical residual.
    """
    v: list[Violation] = []
    n = network.n
    wp, wn, r, d = network.w_plus, network.w_neg, network.r, network.d
    if wp.shape != (n, n) or wn.shape != (n, n) or r.shape != (n,) or d.shape != (n,):
        v.append(Violation("shape", (), 0.0, "weight/rate array shapes do not match neuron count"))
        return v
    ids = [u.id for u in network.neurons]
    if ids != list(range(n)):
        v.append(Violation("ids", (), 0.0, "neuron ids must be 0..n-1 in order"))

    for name, w in (("w_plus", wp), ("w_neg", wn)):
        for i, j in zip(*np.nonzero(w < 0)):
            v.append(
                Violation(
                    "negative-weight",
                    (int(i), int(j)),
                    float(w[i, j]),
                    f"{name}[{i},{j}] = {w[i, j]:.3e} is negative",
                )
            )
    for i in np.nonzero((d < 0) | (d > 1))[0]:
        v.append(Violation("departure-range", (int(i),), float(d[i]), f"d[{i}] = {d[i]} outside [0,1]"))
    for i in np.nonzero(r <= 0)[0]:
        v.append(Violation("rate-positive", (int(i),), float(r[i]), f"r[{i}] = {r[i]} not positive"))

    out = wp.sum(axis=1) + wn.sum(axis=1)
    for i in range(n):
        if d[i] < 1.0:
            res = r[i] * (1.0 - d[i]) - out[i]
            if abs(res) > BALANCE_TOL:
                v.append(
                    Violation(
                        "rate-balance",
                        (int(i),),
                        float(res),
                        f"neuron {i}: r*(1-d) - total outgoing = {res:.3e}",
                    )
                )
        # routing normalization: d + sum P+ + sum P- = 1
        res = d[i] + out[i] / r[i] - 1.0
        if abs(res) > BALANCE_TOL:
            v.append(
                Violation(
                    "routing-normalization",
                    (int(i),),
                    float(res),
                    f"neuron {i}: d + sum(P+) + sum(P-) - 1 = {res:.3e}",
                )
            )

    allowed = network.allowed_edges()
    for i, j in zip(*np.nonzero(((wp > 0) | (wn > 0)) & ~allowed)):
        v.append(
            Violation(
                "topology",
                (int(i), int(j)),
                float(wp[i, j] + wn[i, j]),
                f"synapse {i}->{j} not permitted by the layer/stream topology rule",
            )
        )
    return v


def prune_streams(network: Network, keep: Iterable[FieldKind | str]) -> Network:
    """Drop the input neurons of every stream not in ``keep``.

    Used by stream ablations: the surviving neurons keep their weights and
    firing rates, and each departure probability is re-derived so the freed
    routing mass leaves the network instead of reaching deleted units.
    """
    kept_kinds = {FieldKind(k) for k in keep}
    keep_idx = [u.id for u in network.neurons if not u.field.is_input or u.field in kept_kinds]
    if not keep_idx:
        raise ValueError("pruning would remove every neuron")
    idx = np.array(keep_idx, dtype=int)
    neurons = [
        Neuron(new_id, network.neurons[old].field, network.neurons[old].layer, network.neurons[old].stream)
        for new_id, old in enumerate(keep_idx)
    ]
    sub = Network(
        neurons=neurons,
        w_plus=network.w_plus[np.ix_(idx, idx)].copy(),
        w_neg=network.w_neg[np.ix_(idx, idx)].copy(),
        r=network.r[idx].copy(),
        d=network.d[idx].copy(),
    )
    out = sub.w_plus.sum(axis=1) + sub.w_neg.sum(axis=1)
    live = sub.d < 1.0
    sub.d[live] = 1.0 - out[live] / sub.r[live]
    return sub


# ---------------------------------------------------------------------------
# serialization


def network_to_dict(network: Network) -> dict:
    return {
        "neurons": [
            {"id": u.id, "field": u.field.value, "layer": u.layer, "stream": u.stream}
            for u in network.neurons
        ],
        "wPlus": network.w_plus.tolist(),
        "wNeg": network.w_neg.tolist(),
        "r": network.r.tolist(),
        "d": network.d.tolist(),
    }


def network_from_dict(doc: dict) -> Network:
    try:
        neurons = [
            Neuron(int(u["id"]), FieldKind(u["field"]), int(u["layer"]), int(u["stream"]))
            for u in doc["neurons"]
        ]
        net = Network(
            neurons=neurons,
            w_plus=np.array(doc["wPlus"], dtype=float),
            w_neg=np.array(doc["wNeg"], dtype=float),
            r=np.array(doc["r"], dtype=float),
            d=np.array(doc["d"], dtype=float),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed network document: {exc}") from exc
    return net


def save_network(network: Network, path: str | Path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(network)))


def load_network(path: str | Path) -> Network:
    return network_from_dict(json.loads(Path(path).read_text()))
