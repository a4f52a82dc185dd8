"""Operator entry points.

Commands:
  model-server   run the weight-holding party daemon
  cloud-server   run the secret-key-holding party daemon
  user           execute a full four-phase inference against live servers
  bench          measure runtime/communication and render the report
  infer-plain    run the plaintext fixed-point oracle on a tensor file
  init-demo      generate a loopback registry, keys, and a fixture model

Exit codes: 0 success, 2 usage error, 3 no route for the query,
4 authentication/session failure, 5 input validation error,
6 protocol failure.  Every flag can also be set via environment
variables prefixed PRIVINFER_ (e.g. PRIVINFER_REGISTRY).
"""

from __future__ import annotations

import json
import signal
import sys
from pathlib import Path

import click
import numpy as np

EXIT_NO_ROUTE = 3
EXIT_AUTH = 4
EXIT_VALIDATION = 5
EXIT_PROTOCOL = 6


def _load_registry_file(path: str):
    from .orchestrator import load_registry

    return load_registry(Path(path).read_text())


def _split_endpoint(ep: str):
    host, port = ep.rsplit(":", 1)
    return host, int(port)


@click.group(context_settings={"auto_envvar_prefix": "PRIVINFER"})
def main():
    """Two-party privacy-preserving neural network inference."""


@main.command("model-server")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--listen", default="127.0.0.1:9101", show_default=True)
@click.option("--registry", "registry_path", required=True, type=click.Path(exists=True))
def cmd_model_server(model_path, listen, registry_path):
    """Serve inference sessions as the model-owning party."""
    from .model import load_model, validate_graph
    from .servers import ModelServer

    reg = _load_registry_file(registry_path)
    m = load_model(Path(model_path).read_bytes())
    problems = validate_graph(m)
    if problems:
        for p in problems:
            click.echo(f"model invalid: {p}", err=True)
        sys.exit(EXIT_VALIDATION)
    host, port = _split_endpoint(listen)
    srv = ModelServer(host, port, m, reg.psk)
    _run_daemon(srv, f"model server on {host}:{srv.port} ({m.name})")


@main.command("cloud-server")
@click.option("--listen", default="127.0.0.1:9201", show_default=True)
@click.option("--registry", "registry_path", required=True, type=click.Path(exists=True))
@click.option("--key", "key_path", required=True, type=click.Path(exists=True),
              help="file holding the 32-byte hex X25519 private key")
def cmd_cloud_server(listen, registry_path, key_path):
    """Serve inference sessions as the cryptographic service party."""
    from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey

    from .servers import CloudServer

    reg = _load_registry_file(registry_path)
    raw = bytes.fromhex(Path(key_path).read_text().strip())
    identity = X25519PrivateKey.from_private_bytes(raw)
    host, port = _split_endpoint(listen)
    srv = CloudServer(host, port, identity, reg.psk)
    _run_daemon(srv, f"cloud server on {host}:{srv.port}")


def _run_daemon(srv, banner: str):
    stop = {"flag": False}

    def on_signal(signum, frame):
        stop["flag"] = True

    signal.signal(signal.SIGTERM, on_signal)
    signal.signal(signal.SIGINT, on_signal)
    click.echo(banner, err=True)
    thread = srv.start()
    try:
        while not stop["flag"]:
            signal.pause() if hasattr(signal, "pause") else thread.join(0.5)
    except KeyboardInterrupt:
        pass
    srv.stop()
    summary = {"errors": srv.errors}
    if hasattr(srv, "sessions_served"):
        summary["sessions_served"] = srv.sessions_served
        summary["last_stats"] = srv.last_stats
    click.echo(json.dumps(summary), err=True)


@main.command("user")
@click.option("--query", required=True)
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--registry", "registry_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", default="logits.pten", show_default=True)
@click.option("--labels", default=None, help="comma-separated class labels")
@click.option("--seed", type=int, default=None)
@click.option("--trunc", type=click.Choice(["faithful", "local"]), default="faithful")
@click.option("--ot", type=click.Choice(["dealer", "real"]), default="dealer")
def cmd_user(query, input_path, registry_path, out_path, labels, seed, trunc, ot):
    """Run the four-phase flow: route, establish, infer, reconstruct."""
    from .orchestrator import NoRouteError, compose_response, route_intent
    from .servers import SessionFailure, run_user_flow
    from .tensorio import load_tensor, save_tensor

    reg = _load_registry_file(registry_path)
    try:
        plan = route_intent(query, reg)
    except NoRouteError as e:
        click.echo(f"no route: {e}", err=True)
        sys.exit(EXIT_NO_ROUTE)
    x = load_tensor(input_path)
    meta = plan.model_server.meta_dict()
    if "input_shape" in meta and list(x.shape) != list(meta["input_shape"]):
        click.echo(
            f"input shape {list(x.shape)} does not match the server's "
            f"declared {meta['input_shape']}", err=True,
        )
        sys.exit(EXIT_VALIDATION)
    try:
        result, stats = run_user_flow(
            plan, reg, x, ot=ot, trunc=trunc, seed=seed
        )
    except SessionFailure as e:
        click.echo(f"session failure: {e}", err=True)
        sys.exit(EXIT_AUTH)
    except Exception as e:
        click.echo(f"protocol failure: {e}", err=True)
        sys.exit(EXIT_PROTOCOL)
    save_tensor(out_path, result.to_real())
    label_list = (
        labels.split(",") if labels
        else meta.get("labels")
        or [f"class-{i}" for i in range(result.data.size)]
    )
    click.echo(compose_response(query, result, label_list))
    click.echo(
        f"[session] runtime {stats['runtime_s']:.3f}s, "
        f"{(stats['bytes_sent'] + stats['bytes_received']) / 1e6:.3f} MB, "
        f"{stats['rounds']} rounds", err=True,
    )


@main.command("bench")
@click.option("--models", default="mlp,lenet5", show_default=True,
              help="comma-separated builtin names or model file paths")
@click.option("--batch", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", default="bench-report", show_default=True)
@click.option("--trunc", type=click.Choice(["faithful", "local"]), default="faithful")
@click.option("--ot", type=click.Choice(["dealer", "real"]), default="dealer")
def cmd_bench(models, batch, seed, out_dir, trunc, ot):
    """Measure per-model runtime and communication; write the report."""
    from .bench import load_bench_model, run_bench, write_report
    from .ring import RingConfig

    names = [n.strip() for n in models.split(",") if n.strip()]
    cfg = RingConfig()
    specs = [load_bench_model(n, cfg, seed) for n in names]
    rows = run_bench(specs, batch=batch, seed=seed, ot=ot, trunc=trunc)
    paths = write_report(rows, out_dir)
    click.echo(Path(paths["table"]).read_text().rstrip())
    click.echo(f"report written to {out_dir}", err=True)


@main.command("infer-plain")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", default=None)
def cmd_infer_plain(model_path, input_path, out_path):
    """Plaintext fixed-point oracle inference (no protocol, no privacy)."""
    from .model import load_model, plaintext_infer
    from .ring import FixedTensor
    from .tensorio import load_tensor, save_tensor

    m = load_model(Path(model_path).read_bytes())
    x = load_tensor(input_path)
    if tuple(x.shape) != m.input_shape and tuple(x.shape[1:]) != m.input_shape:
        click.echo(
            f"input shape {x.shape} does not match model {m.input_shape}",
            err=True,
        )
        sys.exit(EXIT_VALIDATION)
    y = plaintext_infer(m, FixedTensor.from_real(x, m.config))
    vals = y.to_real()
    if out_path:
        save_tensor(out_path, vals)
    click.echo(json.dumps(vals.reshape(-1).tolist()))


@main.command("init-demo")
@click.option("--dir", "out_dir", default="demo", show_default=True)
@click.option("--model", "model_name", default="mlp",
              type=click.Choice(["mlp", "lenet5"]), show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def cmd_init_demo(out_dir, model_name, seed):
    """Generate a loopback registry, cloud key, and fixture model."""
    import os

    from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey

    from .bench import BUILTIN_MODELS
    from .model import save_model
    from .orchestrator import ServerEntry, sign_registry
    from .ring import RingConfig
    from .servers import cloud_key_from_seed
    from .tensorio import save_tensor

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = RingConfig()
    m = BUILTIN_MODELS[model_name](cfg, seed)
    (out / "model.pinf").write_bytes(save_model(m))
    identity = cloud_key_from_seed(seed)
    (out / "cloud.key").write_text(identity.private_bytes_raw().hex())
    psk = os.urandom(32)
    tag = "digits" if model_name == "mlp" else "cnn-chest-xray"
    entries = [
        ServerEntry("model-1", "127.0.0.1:9101", (tag,),
                    meta=(("input_shape", list(m.input_shape)),)),
        ServerEntry("cloud-1", "127.0.0.1:9201", ("cloud",),
                    identity.public_key().public_bytes_raw()),
    ]
    (out / "registry.json").write_text(
        sign_registry(entries, psk, Ed25519PrivateKey.generate())
    )
    rng = np.random.default_rng(seed)
    save_tensor(out / "sample.pten", rng.uniform(-1, 1, m.input_shape))
    click.echo(f"demo assets in {out}/: model.pinf cloud.key registry.json sample.pten")


if __name__ == "__main__":
    main()
