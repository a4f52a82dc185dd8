"""Two-party secure-inference driver and reporting helpers.

``run_secure_inference`` walks a model graph layer by layer, calling
the matching secure layer protocol on both parties in lockstep, and
returns this party's share of the logits.  Communication is accounted
per layer through the channel's CommStats scopes.
"""

from __future__ import annotations

import io

import numpy as np

from . import layers as L
from .channel import CommStats, ProtocolError
from .model import ModelSpec

__all__ = ["run_secure_inference", "report_stats", "emit_table"]


def _run_one(ctx: L.LayerContext, m: ModelSpec, x: np.ndarray) -> np.ndarray:
    cfg = ctx.config
    outputs = [np.asarray(x, dtype=np.uint64) & cfg.umask()]
    for i, layer in enumerate(m.layers):
        x = outputs[-1]
        with ctx.chan.stats.scope(f"L{i}:{layer.kind}"):
            if layer.kind == "fc":
                y = L.fc_forward(ctx, x, layer)
            elif layer.kind == "conv2d":
                y = L.conv2d_forward(ctx, x, layer)
            elif layer.kind == "batchnorm":
                y = L.batchnorm_forward(ctx, x, layer)
            elif layer.kind == "relu":
                y = L.relu_forward(ctx, x)
            elif layer.kind == "avgpool":
                y = L.avgpool_forward(
                    ctx, x, layer.params["kh"], layer.params["kw"]
                )
            elif layer.kind == "add_skip":
                y = L.add_skip_forward(
                    x, outputs[layer.params["source"] + 1], cfg
                )
            else:
                raise ProtocolError(f"unsupported layer kind {layer.kind!r}")
        outputs.append(y)
    return outputs[-1]


def run_secure_inference(
    ctx: L.LayerContext, m: ModelSpec, my_share: np.ndarray
) -> np.ndarray:
    """Returns this party's share of the logits.

    Accepts one sample shaped like the model input, or a batch with one
    extra leading axis (samples run back to back over the session).
    """
    my_share = np.asarray(my_share, dtype=np.uint64)
    if my_share.shape == m.input_shape:
        return _run_one(ctx, m, my_share)
    if my_share.shape[1:] == m.input_shape:
        return np.stack([_run_one(ctx, m, s) for s in my_share])
    raise ValueError(
        f"share shape {my_share.shape} does not match model input "
        f"{m.input_shape}"
    )


def report_stats(chan) -> CommStats:
    return chan.stats


def emit_table(rows: list, reference: dict | None = None) -> str:
    """Render per-model runtime/communication rows as an aligned table.

    Each row: {model, runtime_s, comm_mb, batch}.  Figures are reported
    per sample (totals divided by batch).  ``reference`` optionally maps
    model name to (runtime_s, comm_mb) literature figures; those are
    shown side by side with the measured/reference ratio, with no pass
    threshold attached.
    """
    buf = io.StringIO()
    cols = ["Model", "Batch", "Runtime(s)", "Comm(MB)"]
    if reference:
        cols += ["Ref Runtime(s)", "Ref Comm(MB)", "Comm ratio"]
    table = [cols]
    for r in rows:
        batch = max(int(r.get("batch", 1)), 1)
        rt = r["runtime_s"] / batch
        mb = r["comm_mb"] / batch
        line = [str(r["model"]), str(batch), f"{rt:.3f}", f"{mb:.3f}"]
        if reference:
            ref = reference.get(r["model"])
            if ref:
                line += [f"{ref[0]:.3f}", f"{ref[1]:.3f}", f"{mb / ref[1]:.2f}x"]
            else:
                line += ["-", "-", "-"]
        table.append(line)
    widths = [max(len(row[i]) for row in table) for i in range(len(cols))]
    for row in table:
        buf.write("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        buf.write("\n")
    return buf.getvalue()
