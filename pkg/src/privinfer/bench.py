"""Benchmark harness: per-model runtime and communication report.

Runs the two-party protocol in-process over a loopback channel pair,
measures wall clock and bytes on the wire, and emits a text table, a
CSV file, and a matplotlib figure comparing measured communication
against the published reference figures.  Reference numbers come from
a GPU-accelerated implementation with a different OT stack, so only
the ratio is reported; there is no pass threshold.
"""

from __future__ import annotations

import csv
import threading
import time
from pathlib import Path

import numpy as np

from .channel import InMemoryChannel
from .he import HEParams
from .layers import setup_layer_context
from .model import ModelSpec, build_lenet5, build_mlp, load_model
from .ot.providers import make_provider
from .ring import FixedTensor
from .runtime import emit_table, run_secure_inference
from .sharing import share

# Published per-sample figures (runtime seconds, communication MB) for
# the corresponding architectures, reproduced for side-by-side context.
REFERENCE = {
    "mlp": (0.005, 0.296),
    "lenet5": (0.012, 1.028),
    "alexnet": (4.472, 242.219),
    "resnet18": (22.982, 1653.534),
    "resnet34": (38.414, 2748.205),
    "resnet50": (121.952, 8076.670),
}

BUILTIN_MODELS = {
    "mlp": lambda cfg, seed: build_mlp(cfg, seed),
    "lenet5": lambda cfg, seed: build_lenet5(cfg, seed),
}

__all__ = ["REFERENCE", "BUILTIN_MODELS", "bench_model", "run_bench", "write_report"]


def _reference_name(name: str) -> str:
    base = name.split("-")[0].lower()
    return base if base in REFERENCE else name.lower()


def bench_model(
    m: ModelSpec,
    batch: int = 1,
    seed: int = 0,
    ot: str = "dealer",
    trunc: str = "faithful",
    he_params: HEParams | None = None,
) -> dict:
    """One timed secure inference of a batch; returns a report row."""
    rng = np.random.default_rng(seed)
    x = FixedTensor.from_real(
        rng.uniform(-1, 1, (batch,) + m.input_shape), m.config
    )
    st = share(x, rng)
    shares = (st.share0.values.data, st.share1.values.data)
    c0, c1 = InMemoryChannel.make_pair()
    chans = (c0, c1)
    errors = [None, None]

    def party(i):
        try:
            from .model import strip_weights

            prov = make_provider(ot, i, chans[i], seed=9000 + seed)
            mm = m if i == 0 else strip_weights(m)
            ctx = setup_layer_context(
                i, chans[i], prov, m.config, he_params, trunc
            )
            run_secure_inference(ctx, mm, shares[i])
        except Exception as e:
            errors[i] = e
            chans[i].close()

    t0 = time.perf_counter()
    threads = [threading.Thread(target=party, args=(i,)) for i in range(2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    elapsed = time.perf_counter() - t0
    if any(errors):
        raise RuntimeError(f"bench run failed: {errors}")
    return {
        "model": m.name,
        "batch": batch,
        "runtime_s": elapsed,
        "comm_mb": c0.stats.total_bytes / 1e6,
        "rounds": c0.stats.rounds,
    }


def run_bench(model_specs: list, batch: int = 1, seed: int = 0,
              ot: str = "dealer", trunc: str = "faithful") -> list:
    return [bench_model(m, batch, seed, ot, trunc) for m in model_specs]


def write_report(rows: list, out_dir) -> dict:
    """Emit table text, CSV, and figure; returns the artifact paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ref = {r["model"]: REFERENCE.get(_reference_name(r["model"])) for r in rows}
    ref = {k: v for k, v in ref.items() if v}
    table = emit_table(rows, ref)
    (out / "report.txt").write_text(table)

    csv_path = out / "report.csv"
    with csv_path.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow([
            "model", "batch", "runtime_s_per_sample", "comm_mb_per_sample",
            "rounds", "ref_runtime_s", "ref_comm_mb", "comm_ratio",
        ])
        for r in rows:
            b = max(int(r["batch"]), 1)
            rt, mb = r["runtime_s"] / b, r["comm_mb"] / b
            rr = ref.get(r["model"])
            w.writerow([
                r["model"], b, f"{rt:.6f}", f"{mb:.6f}", r["rounds"],
                f"{rr[0]:.3f}" if rr else "", f"{rr[1]:.3f}" if rr else "",
                f"{mb / rr[1]:.3f}" if rr else "",
            ])

    fig_path = out / "report.png"
    _render_figure(rows, ref, fig_path)
    return {"table": out / "report.txt", "csv": csv_path, "figure": fig_path}


def _render_figure(rows: list, ref: dict, path: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = [r["model"] for r in rows]
    batches = [max(int(r["batch"]), 1) for r in rows]
    runtimes = [r["runtime_s"] / b for r, b in zip(rows, batches)]
    comms = [r["comm_mb"] / b for r, b in zip(rows, batches)]
    pos = np.arange(len(names))

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.bar(pos, runtimes, width=0.6, color="#4878d0")
    ax1.set_xticks(pos, names, rotation=20)
    ax1.set_ylabel("runtime per sample (s)")
    ax1.set_title("Secure inference runtime")

    width = 0.38
    ax2.bar(pos - width / 2, comms, width, label="measured", color="#4878d0")
    ref_vals = [ref.get(n, (0, float("nan")))[1] for n in names]
    ax2.bar(pos + width / 2, ref_vals, width, label="reference", color="#ee854a")
    ax2.set_xticks(pos, names, rotation=20)
    ax2.set_ylabel("communication per sample (MB)")
    ax2.set_title("Communication vs reference")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def load_bench_model(name_or_path: str, cfg, seed: int = 0) -> ModelSpec:
    if name_or_path in BUILTIN_MODELS:
        return BUILTIN_MODELS[name_or_path](cfg, seed)
    return load_model(Path(name_or_path).read_bytes())
