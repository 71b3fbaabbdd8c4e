"""Value models over sequents: a bag-of-words linear baseline and a gated GNN.

Both are plain numpy with hand-written gradients in float64.  Parameters are
small dataclasses holding named arrays; ``evaluate_batch`` makes either one
usable as a value model for the search module.
"""
from __future__ import annotations

import functools
import math
import zipfile
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .graphenc import NUM_LABELS, GraphArrays, encode
from .syntax import BOTTOM, And, Formula, Imp, Or, Sequent, Var

MODEL_VERSION = 1
KINDS = ("bow", "gnn-vm", "gnn-tm")


class ModelFileError(ValueError):
    pass


# ---------------------------------------------------------------------------
# bag of words


def _count(f: Formula, m: int, out: np.ndarray, base: int) -> None:
    stack = [f]
    while stack:
        g = stack.pop()
        if isinstance(g, Var):
            if g.index > m:
                raise ValueError(f"variable P{g.index} exceeds feature size m={m}")
            out[base + g.index - 1] += 1
        elif g is BOTTOM:
            out[base + m] += 1
        else:
            out[base + m + {And: 1, Or: 2, Imp: 3}[type(g)]] += 1
            stack.append(g.left)
            stack.append(g.right)


def bow_dim(m: int) -> int:
    return 2 * (m + 4)


def bow_features(s: Sequent, m: int) -> np.ndarray:
    """Antecedent-side then consequent-side counts of P1..Pm, false, &, |, ->."""
    v = np.zeros(bow_dim(m))
    for a in s.antecedents:
        _count(a, m, v, 0)
    _count(s.consequent, m, v, m + 4)
    return v


@dataclass
class BowParams:
    m: int
    weights: np.ndarray
    bias: np.ndarray = field(default_factory=lambda: np.zeros(()))

    kind = "bow"

    @classmethod
    def zeros(cls, m: int) -> "BowParams":
        return cls(m, np.zeros(bow_dim(m)), np.zeros(()))

    def arrays(self) -> dict:
        return {"weights": self.weights, "bias": self.bias}

    def features(self, sequents: Sequence[Sequent]) -> np.ndarray:
        X = np.zeros((len(sequents), bow_dim(self.m)))
        for i, s in enumerate(sequents):
            X[i] = bow_features(s, self.m)
        return X

    def evaluate_batch(self, sequents: Sequence[Sequent]) -> np.ndarray:
        return bow_forward(self, self.features(sequents))


def bow_forward(p: BowParams, X: np.ndarray) -> np.ndarray:
    return np.clip(X @ p.weights + p.bias, 0.0, 1.0)


def bow_loss_grad(p: BowParams, X: np.ndarray, y: np.ndarray):
    raw = X @ p.weights + p.bias
    pred = np.clip(raw, 0.0, 1.0)
    err = pred - y
    loss = float(np.mean(err ** 2))
    # the clamp passes gradient on the closed interval so zero init can move
    d = 2.0 * err / len(y) * ((raw >= 0.0) & (raw <= 1.0))
    return loss, {"weights": X.T @ d, "bias": np.asarray(d.sum())}


# ---------------------------------------------------------------------------
# gated graph neural network

# message transform index: 0 out-Left, 1 out-Right, 2 in-Left, 3 in-Right
NUM_MSG = 4
GNN_ORDER = ("emb", "W_msg", "b_msg", "Wg", "Ug", "Uc", "W1", "b1", "w2", "b2")


@dataclass
class GnnParams:
    H: int
    T: int
    fmt: str
    p: dict

    @property
    def kind(self) -> str:
        return "gnn-" + self.fmt

    def arrays(self) -> dict:
        return self.p

    def evaluate_batch(self, sequents: Sequence[Sequent], chunk: int = 512) -> np.ndarray:
        out = np.empty(len(sequents))
        for i in range(0, len(sequents), chunk):
            part = sequents[i:i + chunk]
            batch = pack([graph_arrays(s, self.fmt) for s in part])
            out[i:i + len(part)] = gnn_forward(self, batch)[0]
        return out


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    lim = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


def init_gnn(H: int = 16, T: int = 6, fmt: str = "tm", seed: int = 0) -> GnnParams:
    if fmt not in ("vm", "tm"):
        raise ValueError(f"unknown graph format {fmt!r}")
    rng = np.random.default_rng(seed)
    p = {
        "emb": _glorot(rng, NUM_LABELS, H, (NUM_LABELS, H)),
        "W_msg": np.stack([_glorot(rng, H, H, (H, H)) for _ in range(NUM_MSG)]),
        "b_msg": np.zeros((NUM_MSG, H)),
        "Wg": np.concatenate([_glorot(rng, H, H, (H, H)) for _ in range(3)], axis=1),
        "Ug": np.concatenate([_glorot(rng, H, H, (H, H)) for _ in range(2)], axis=1),
        "Uc": _glorot(rng, H, H, (H, H)),
        "W1": _glorot(rng, H, H, (H, H)),
        "b1": np.zeros(H),
        "w2": _glorot(rng, H, 1, (H,)),
        "b2": np.zeros(()),
    }
    return GnnParams(H, T, fmt, p)


@functools.lru_cache(maxsize=400_000)
def graph_arrays(s: Sequent, fmt: str) -> GraphArrays:
    return encode(s, fmt).arrays()


@dataclass
class GraphBatch:
    labels: np.ndarray
    onehot: np.ndarray  # (N, labels)
    A: sp.csr_matrix  # (N, 4N): row v sums transformed neighbour states
    At: sp.csr_matrix
    deg: np.ndarray  # (N, 4) edges of each message kind
    starts: np.ndarray  # first vertex of each graph
    owner: np.ndarray  # graph of each vertex

    @property
    def num_graphs(self) -> int:
        return len(self.starts)


def pack(graphs: Sequence[GraphArrays]) -> GraphBatch:
    """Disjoint union of graphs as one sparse batch."""
    sizes = np.array([g.num_vertices for g in graphs], dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    N = int(sizes.sum())
    labels = np.concatenate([g.labels for g in graphs])
    src = np.concatenate([g.src + o for g, o in zip(graphs, starts)])
    dst = np.concatenate([g.dst + o for g, o in zip(graphs, starts)])
    et = np.concatenate([g.etype for g in graphs])
    # out-edge (s, d, l): s hears d via kind l; d hears s via kind 2 + l.
    # Column w * 4 + k picks kind k's transform of vertex w.
    rows = np.concatenate([src, dst])
    kinds = np.concatenate([et, et + 2])
    cols = np.concatenate([dst, src]) * NUM_MSG + kinds
    A = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(N, NUM_MSG * N))
    deg = np.zeros((N, NUM_MSG))
    np.add.at(deg, (rows, kinds), 1.0)
    onehot = np.zeros((N, NUM_LABELS))
    onehot[np.arange(N), labels] = 1.0
    owner = np.repeat(np.arange(len(graphs)), sizes)
    return GraphBatch(labels, onehot, A, A.T.tocsr(), deg, starts, owner)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _msg_cat(W_msg: np.ndarray) -> np.ndarray:
    # (4, H, H) -> (H, 4H) so one product transforms a vertex for every kind
    H = W_msg.shape[1]
    return W_msg.transpose(1, 0, 2).reshape(H, NUM_MSG * H)


def gnn_propagate(params: GnnParams, batch: GraphBatch, keep: bool = False):
    """Run T gated message-passing steps; returns final states (and the tape)."""
    p, H = params.p, params.H
    h = p["emb"][batch.labels]
    N = len(h)
    Wc = _msg_cat(p["W_msg"])
    bias = batch.deg @ p["b_msg"]
    tape = []
    for _ in range(params.T):
        P = (h @ Wc).reshape(N * NUM_MSG, H)
        M = batch.A @ P + bias
        G = M @ p["Wg"]
        U = h @ p["Ug"]
        z = _sigmoid(G[:, :H] + U[:, :H])
        r = _sigmoid(G[:, H:2 * H] + U[:, H:])
        rh = r * h
        c = np.tanh(G[:, 2 * H:] + rh @ p["Uc"])
        if keep:
            tape.append((h, M, z, r, rh, c))
        h = h + z * (c - h)
    return h, tape


def gnn_forward(params: GnnParams, batch: GraphBatch, keep: bool = False):
    p = params.p
    h, tape = gnn_propagate(params, batch, keep)
    g = np.add.reduceat(h, batch.starts, axis=0)
    a_pre = g @ p["W1"] + p["b1"]
    a = np.maximum(a_pre, 0.0)
    y = _sigmoid(a @ p["w2"] + p["b2"])
    return y, (tape, g, a_pre, a)


def gnn_loss_grad(params: GnnParams, batch: GraphBatch, target: np.ndarray):
    p, H = params.p, params.H
    y, (tape, g, a_pre, a) = gnn_forward(params, batch, keep=True)
    err = y - target
    loss = float(np.mean(err ** 2))
    grad = {k: np.zeros_like(v) for k, v in p.items()}

    do = 2.0 * err / len(y) * y * (1.0 - y)
    grad["w2"] = a.T @ do
    grad["b2"] = np.asarray(do.sum())
    da_pre = np.outer(do, p["w2"]) * (a_pre > 0.0)
    grad["W1"] = g.T @ da_pre
    grad["b1"] = da_pre.sum(axis=0)
    dh = (da_pre @ p["W1"].T)[batch.owner]

    N = len(dh)
    Wc = _msg_cat(p["W_msg"])
    dWc = np.zeros_like(Wc)
    dM_total = np.zeros((N, H))
    for h, M, z, r, rh, c in reversed(tape):
        dz = dh * (c - h)
        dc = dh * z
        dprev = dh * (1.0 - z)
        dc_pre = dc * (1.0 - c * c)
        grad["Uc"] += rh.T @ dc_pre
        drh = dc_pre @ p["Uc"].T
        dprev += drh * r
        dz_pre = dz * z * (1.0 - z)
        dr_pre = drh * h * r * (1.0 - r)
        dG = np.concatenate([dz_pre, dr_pre, dc_pre], axis=1)
        dU = dG[:, :2 * H]
        grad["Wg"] += M.T @ dG
        grad["Ug"] += h.T @ dU
        dprev += dU @ p["Ug"].T
        dM = dG @ p["Wg"].T
        dM_total += dM
        dP = (batch.At @ dM).reshape(N, NUM_MSG * H)
        dWc += h.T @ dP
        dprev += dP @ Wc.T
        dh = dprev
    grad["b_msg"] = batch.deg.T @ dM_total
    grad["W_msg"] = dWc.reshape(H, NUM_MSG, H).transpose(1, 0, 2).copy()
    grad["emb"] = batch.onehot.T @ dh
    return loss, grad


# ---------------------------------------------------------------------------
# uniform interface


def evaluate(params, s: Sequent) -> float:
    return float(params.evaluate_batch([s])[0])


def prepare(params, sequents: Sequence[Sequent]):
    """Precomputed inputs (features or graphs) for a list of sequents."""
    if isinstance(params, BowParams):
        return params.features(sequents)
    return [graph_arrays(s, params.fmt) for s in sequents]


def _take(params, inputs, idx):
    if isinstance(params, BowParams):
        return inputs[idx]
    return pack([inputs[i] for i in idx])


def _loss_grad(params, batch, y):
    if isinstance(params, BowParams):
        return bow_loss_grad(params, batch, y)
    return gnn_loss_grad(params, batch, y)


def _forward(params, batch) -> np.ndarray:
    if isinstance(params, BowParams):
        return bow_forward(params, batch)
    return gnn_forward(params, batch)[0]


def _predict(params, inputs, chunk: int = 512) -> np.ndarray:
    if isinstance(params, BowParams):
        return bow_forward(params, inputs)
    out = np.empty(len(inputs))
    for i in range(0, len(inputs), chunk):
        out[i:i + chunk] = gnn_forward(params, pack(inputs[i:i + chunk]))[0]
    return out


def loss_and_grad(params, examples):
    """MSE and its gradient on ``examples`` (pairs of sequent and target)."""
    seqs = [e[0] for e in examples]
    y = np.array([e[1] for e in examples], dtype=np.float64)
    inputs = prepare(params, seqs)
    return _loss_grad(params, _take(params, inputs, np.arange(len(seqs))), y)


def gradient_check(params, example, epsilon: float = 1e-4, floor: float = 1e-6) -> float:
    """Max relative error between backprop and central differences.

    Uses the fourth-order central stencil at offsets +-eps and +-2 eps, so at
    eps = 1e-4 truncation error sits far below the tolerance of interest.
    Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps entries
    whose true gradient is zero from dividing roundoff by zero.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    batch = _take(params, prepare(params, [example[0]]), np.arange(1))
    y = np.array([example[1]], dtype=np.float64)
    _, grad = _loss_grad(params, batch, y)

    def at(flat, i, x):
        flat[i] = x
        return float(np.mean((_forward(params, batch) - y) ** 2))

    worst = 0.0
    for name, arr in params.arrays().items():
        flat = arr.reshape(-1)
        gflat = np.asarray(grad[name]).reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            f1, g1 = at(flat, i, old + epsilon), at(flat, i, old - epsilon)
            f2, g2 = at(flat, i, old + 2 * epsilon), at(flat, i, old - 2 * epsilon)
            flat[i] = old
            num = (8.0 * (f1 - g1) - (f2 - g2)) / (12.0 * epsilon)
            a = float(gflat[i])
            worst = max(worst, abs(a - num) / max(abs(a), abs(num), floor))
    return worst


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    epochs: int = 20
    lr: float = 1e-3
    batch_size: int = 32
    hidden: int = 16
    steps: int = 6
    seed: int = 0
    m: Optional[int] = None  # BoW feature size; defaults to the largest index seen
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class TrainResult:
    params: object
    history: list  # dicts: epoch, train_mse, val_mse, test_mse
    best_epoch: int
    test_mse: float
    constant: float  # mean training target
    constant_test_mse: float
    constant_train_mse: float


class Adam:
    def __init__(self, arrays: dict, lr: float, b1: float, b2: float, eps: float):
        self.arrays = arrays
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.t = 0

    def step(self, grad: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, arr in self.arrays.items():
            g = grad[k]
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            arr -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def _max_var(seqs) -> int:
    m = 1
    for s in seqs:
        v = s.variables()
        if v:
            m = max(m, max(v))
    return m


def _copy(params):
    if isinstance(params, BowParams):
        return BowParams(params.m, params.weights.copy(), params.bias.copy())
    return GnnParams(params.H, params.T, params.fmt, {k: v.copy() for k, v in params.p.items()})


def new_params(kind: str, cfg: TrainConfig, m: int = 1):
    if kind == "bow":
        return BowParams.zeros(cfg.m if cfg.m is not None else m)
    if kind in ("gnn-vm", "gnn-tm"):
        return init_gnn(cfg.hidden, cfg.steps, kind[4:], cfg.seed)
    raise ValueError(f"unknown model kind {kind!r}")


def train(kind: str, train_set, val_set, test_set, cfg: TrainConfig = TrainConfig(),
          log=None) -> TrainResult:
    """Fit a fresh model by Adam on mean squared error.

    Each set is a sequence of (sequent, target, ...) records.  The returned
    parameters are those of the epoch with the lowest validation error.
    """
    if not train_set:
        raise ValueError("empty training split")
    sets = [train_set, val_set, test_set]
    m = _max_var(e[0] for st in sets for e in st) if kind == "bow" and cfg.m is None else 1
    params = new_params(kind, cfg, m)
    inputs = [prepare(params, [e[0] for e in st]) for st in sets]
    ys = [np.array([e[1] for e in st], dtype=np.float64) for st in sets]

    def mse(i):
        if len(ys[i]) == 0:
            return float("nan")
        return float(np.mean((_predict(params, inputs[i]) - ys[i]) ** 2))

    opt = Adam(params.arrays(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng(cfg.seed)
    n = len(ys[0])
    history = []
    best, best_val, best_epoch = _copy(params), math.inf, 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for i in range(0, n, cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            loss, grad = _loss_grad(params, _take(params, inputs[0], idx), ys[0][idx])
            total += loss * len(idx)
            opt.step(grad)
        # train error is the running mean over the epoch's batches
        row = {"epoch": epoch, "train_mse": total / n, "val_mse": mse(1), "test_mse": mse(2)}
        history.append(row)
        if log:
            log(row)
        # with no validation data the last epoch wins
        score = row["val_mse"] if len(ys[1]) else -epoch
        if score < best_val:
            best, best_val, best_epoch = _copy(params), score, epoch
    c = float(ys[0].mean())
    params = best
    test = float(np.mean((_predict(params, inputs[2]) - ys[2]) ** 2)) if len(ys[2]) else float("nan")
    return TrainResult(
        params, history, best_epoch, test, c,
        float(np.mean((ys[2] - c) ** 2)) if len(ys[2]) else float("nan"),
        float(np.mean((ys[0] - c) ** 2)),
    )


# ---------------------------------------------------------------------------
# model files


def save_params(params, path) -> None:
    meta = {
        "version": np.array(MODEL_VERSION),
        "kind": np.array(params.kind),
    }
    if isinstance(params, BowParams):
        meta.update(m=np.array(params.m), H=np.array(0), T=np.array(0), fmt=np.array(""))
    else:
        meta.update(m=np.array(0), H=np.array(params.H), T=np.array(params.T), fmt=np.array(params.fmt))
    arrays = {"w_" + k: v for k, v in params.arrays().items()}
    with open(path, "wb") as fh:
        np.savez(fh, **meta, **arrays)


def _expected_shapes(kind: str, H: int, m: int) -> dict:
    if kind == "bow":
        return {"weights": (bow_dim(m),), "bias": ()}
    return {"emb": (NUM_LABELS, H), "W_msg": (NUM_MSG, H, H), "b_msg": (NUM_MSG, H),
            "Wg": (H, 3 * H), "Ug": (H, 2 * H), "Uc": (H, H), "W1": (H, H),
            "b1": (H,), "w2": (H,), "b2": ()}


def load_params(path, expect_kind: Optional[str] = None):
    try:
        with np.load(path, allow_pickle=False) as z:
            data = {k: z[k] for k in z.files}
    except (OSError, ValueError, EOFError, zipfile.BadZipFile, KeyError) as e:
        raise ModelFileError(f"malformed model file {path}: {e}") from e
    try:
        version = int(data["version"])
        kind = str(data["kind"])
        H, T, m = int(data["H"]), int(data["T"]), int(data["m"])
        fmt = str(data["fmt"])
    except KeyError as e:
        raise ModelFileError(f"malformed model file {path}: missing {e}") from e
    if version != MODEL_VERSION:
        raise ModelFileError(f"model file version {version}, expected {MODEL_VERSION}")
    if kind not in KINDS:
        raise ModelFileError(f"unknown model kind {kind!r}")
    if expect_kind is not None and kind != expect_kind:
        raise ModelFileError(f"model kind mismatch: file holds {kind}, expected {expect_kind}")
    arrays = {}
    for name, shape in _expected_shapes(kind, H, m).items():
        key = "w_" + name
        if key not in data:
            raise ModelFileError(f"malformed model file {path}: missing {name}")
        arr = data[key]
        if arr.shape != shape or arr.dtype != np.float64:
            raise ModelFileError(f"shape mismatch for {name}: {arr.shape}, expected {shape}")
        arrays[name] = arr.copy()
    if kind == "bow":
        return BowParams(m, arrays["weights"], arrays["bias"])
    if kind[4:] != fmt:
        raise ModelFileError(f"graph format {fmt!r} does not match kind {kind}")
    return GnnParams(H, T, fmt, arrays)
