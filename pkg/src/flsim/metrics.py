"""Global-model reconstruction, test evaluation, norm statistics, CSV output."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, LayoutError
from .nn import MODEL, Batch, ModelSpec, ParamVector, forward
from .data import Dataset

CSV_HEADER = "round,test_accuracy,test_loss,mean_update_norm,mean_model_norm,wallclock_ms"


@dataclass(frozen=True)
class RoundRecord:
    """Per-round metrics row."""

    round: int
    test_accuracy: float | None
    test_loss: float | None
    mean_update_norm: float
    mean_model_norm: float
    wallclock_ms: float


def reconstruct_global(scheme: str, server, clients, sizes: list[int]) -> ParamVector:
    """The model the harness evaluates each round.

    Model-upload runs expose it as the broadcast; delta-upload runs with a
    shared initial model accumulate it server-side.  Runs with per-client
    initialization have no server-visible model, so the harness takes the
    size-weighted mean of the current client models (omniscient view; this
    is instrumentation, not a protocol message).
    """
    if scheme != server.scheme:
        raise InputError(f"scheme {scheme!r} does not match server {server.scheme!r}")
    if server.init_mode == "server":
        if scheme == "mb":
            if server.broadcast is None:
                raise InputError("no broadcast to evaluate")
            return server.broadcast
        if server.accumulated_global is None:
            raise InputError("no accumulated global model to evaluate")
        return server.accumulated_global
    return mean_client_model(clients, sizes)


def mean_client_model(clients, sizes: list[int]) -> ParamVector:
    """Size-weighted mean of client models, reduced in ascending id order."""
    if len(clients) == 0:
        raise InputError("no clients")
    if len(clients) != len(sizes):
        raise InputError("clients and sizes differ in length")
    ordered = sorted(clients, key=lambda c: c.client_id)
    total = float(sum(sizes))
    sizes_by_id = {c.client_id: s for c, s in zip(clients, sizes)}
    first = ordered[0].local_model
    dtype = first.dtype
    acc = np.zeros_like(first.values)
    for c in ordered:
        acc += dtype.type(sizes_by_id[c.client_id] / total) * c.local_model.values
    return ParamVector(MODEL, acc, first.spec)


def evaluate(spec: ModelSpec, params: ParamVector, testset: Dataset,
             batch_size: int = 256) -> tuple[float, float]:
    """(accuracy, mean loss) over the whole test set.

    Classification is argmax over logits with ties broken toward the
    lowest class index; accuracy is exactly correct/total.
    """
    if params.kind != MODEL:
        raise LayoutError("evaluate expects a model vector")
    n = len(testset)
    if n == 0:
        raise InputError("empty test set")
    correct = 0
    loss_sum = 0.0
    for i in range(0, n, batch_size):
        images = testset.images[i:i + batch_size]
        labels = testset.labels[i:i + batch_size]
        logits = forward(spec, params, Batch(images, labels))
        preds = logits.argmax(axis=1)
        correct += int((preds == labels).sum())
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1))
        nll = log_norm - shifted[np.arange(len(labels)), labels]
        loss_sum += float(nll.sum())
    return correct / n, loss_sum / n


def make_evaluator(spec: ModelSpec, testset: Dataset, sizes: list[int],
                   batch_size: int = 256):
    """Bind reconstruction + evaluation into a run_round evaluator."""

    def evaluator(server, clients):
        params = reconstruct_global(server.scheme, server, clients, sizes)
        return evaluate(spec, params, testset, batch_size)

    return evaluator


@dataclass(frozen=True)
class NormStats:
    """Summary of a set of payloads: per-payload norms plus a coordinate histogram."""

    mean_norm: float
    std_norm: float
    hist_counts: np.ndarray
    bin_edges: np.ndarray


def payload_norm_stats(payloads: list[ParamVector], bins: int = 50,
                       value_range: tuple[float, float] | None = None) -> NormStats:
    """L2-norm summary plus a histogram over all coordinates.

    Stable under reordering of the payload list.  With an explicit range,
    out-of-range coordinates are clipped into it, so histogram counts
    always sum to payload_count * payload_length.
    """
    if not payloads:
        raise InputError("no payloads")
    first = payloads[0]
    for p in payloads[1:]:
        if not p.same_layout(first):
            raise LayoutError("payloads have different layouts")
    norms = np.sort(np.array(
        [np.linalg.norm(p.values.astype(np.float64)) for p in payloads]))
    coords = np.concatenate([p.values for p in payloads]).astype(np.float64)
    if value_range is not None:
        coords = np.clip(coords, value_range[0], value_range[1])
    counts, edges = np.histogram(coords, bins=bins, range=value_range)
    return NormStats(float(norms.mean()), float(norms.std()), counts, edges)


def coordinate_std(payloads: list[ParamVector]) -> float:
    """Standard deviation over every coordinate of every payload."""
    if not payloads:
        raise InputError("no payloads")
    coords = np.concatenate([p.values for p in payloads]).astype(np.float64)
    return float(coords.std())


def _fmt(value: float) -> str:
    return f"{value:.9g}"


def emit_csv(records: list[RoundRecord], sink) -> int:
    """Write the metrics table; returns the number of bytes written.

    One row per record, header first, LF line endings, floats rendered
    with 9 significant digits.  The sink must be a binary stream.
    """
    lines = [CSV_HEADER]
    for r in records:
        if r.test_accuracy is None or r.test_loss is None:
            raise InputError(f"round {r.round}: record has no evaluation results")
        lines.append(",".join([
            str(r.round), _fmt(r.test_accuracy), _fmt(r.test_loss),
            _fmt(r.mean_update_norm), _fmt(r.mean_model_norm),
            _fmt(r.wallclock_ms),
        ]))
    blob = ("\n".join(lines) + "\n").encode("ascii")
    sink.write(blob)
    return len(blob)


def parse_csv(blob: bytes) -> list[RoundRecord]:
    """Parse emit_csv output back into records (within rendering precision)."""
    lines = blob.decode("ascii").strip().split("\n")
    if lines[0] != CSV_HEADER:
        raise InputError(f"unexpected header {lines[0]!r}")
    out = []
    for line in lines[1:]:
        parts = line.split(",")
        out.append(RoundRecord(int(parts[0]), float(parts[1]), float(parts[2]),
                               float(parts[3]), float(parts[4]), float(parts[5])))
    return out


def emit_histogram_csv(stats: NormStats, sink) -> int:
    """Write a coordinate histogram as `bin_lo,bin_hi,count` rows."""
    lines = ["bin_lo,bin_hi,count"]
    for lo, hi, count in zip(stats.bin_edges[:-1], stats.bin_edges[1:],
                             stats.hist_counts):
        lines.append(f"{_fmt(lo)},{_fmt(hi)},{int(count)}")
    blob = ("\n".join(lines) + "\n").encode("ascii")
    sink.write(blob)
    return len(blob)
