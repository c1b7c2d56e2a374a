"""Experiment drivers: wave runs, frequency sweeps, limit checks and rendering.

Every driver takes a parsed JSON config (a plain dict) and returns a report
dict; file outputs are written where the config's ``outputs`` section asks.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lagrangian import (
    ConstraintNet,
    NotFeedforwardError,
    bp_limit_deltas,
    bp_limit_weight_rate,
    chain,
    consistent_init,
    from_layered,
    integrate,
    layer_blocks,
)
from .net import LayeredNet, new_layered
from .oracle import backprop_exact, forward_instant
from .signals import SignalSpec
from .wave import (
    frame_mismatch,
    frames_document,
    run,
    sync_layer,
    write_frames_json,
    write_trace_csv,
)

SEED_ENV = "WAVEGRAD_SEED"
CONSTANT_TOL = 1e-10


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


def config_seed(config: dict) -> int:
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from exc
    return int(config.get("seed", 0))


def load_config(path: str | Path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} does not exist")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    doc.setdefault("_base", str(p.parent))
    return doc


def _resolve(config: dict, name: str) -> Path:
    p = Path(name)
    if not p.is_absolute():
        p = Path(config.get("_base", ".")) / p
    return p


def _positive(config: dict, key: str, default=None, integer=False):
    val = config.get(key, default)
    if val is None:
        raise ConfigError(f"missing {key!r}")
    try:
        val = int(val) if integer else float(val)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key!r} must be a number") from exc
    if not val > 0:
        raise ConfigError(f"{key!r} must be positive, got {val}")
    return val


def build_net(config: dict, seed: int) -> LayeredNet:
    spec = config.get("net", {"widths": [8] * 10, "activation": "tanh"})
    if "file" in spec:
        path = _resolve(config, spec["file"])
        if not path.is_file():
            raise ConfigError(f"net file {path} does not exist")
        return LayeredNet.load(path)
    try:
        return new_layered(spec["widths"], spec.get("activation", "tanh"), init=seed,
                           scale=float(spec.get("init_scale", 0.5)))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad net spec: {exc}") from exc


def base_pair(net: LayeredNet, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded base input/target, uniform in [-1, 1]; independent of the weight stream."""
    rng = np.random.default_rng([seed, 1])
    return rng.uniform(-1, 1, net.widths[0]), rng.uniform(-1, 1, net.widths[-1])


def build_signal(doc: dict, net: LayeredNet, seed: int) -> SignalSpec:
    doc = dict(doc)
    u, y = base_pair(net, seed)
    kind = doc.get("kind", "constant")
    if kind in ("constant", "sinusoid"):
        doc.setdefault("u", u.tolist())
        doc.setdefault("y", y.tolist())
    elif kind == "stepwise" and "levels" not in doc:
        rng = np.random.default_rng([seed, 2])
        n = int(doc.get("n_levels", 2))
        doc["levels"] = [[rng.uniform(-1, 1, net.widths[0]).tolist(),
                          rng.uniform(-1, 1, net.widths[-1]).tolist()] for _ in range(n)]
    try:
        return SignalSpec.from_dict({"kind": kind, **doc})
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad signal spec: {exc}") from exc


@dataclass
class ErrorReport:
    depth: int
    sync_layer: int | None
    mismatch: list[int]
    mean_error: list[float]
    max_error: list[float]
    scored_ticks: int
    rows: list[dict] = field(default_factory=list)
    passed: bool = True
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "sync_layer": self.sync_layer,
            "frame_mismatch": self.mismatch,
            "mean_rel_error": self.mean_error,
            "max_rel_error": self.max_error,
            "scored_ticks": self.scored_ticks,
            "rows": self.rows,
            "passed": self.passed,
            "notes": self.notes,
        }


def summarize(trace, depth: int, warmup: int) -> tuple[list[float], list[float], int]:
    """Per-layer mean and max relative error over records with ``t >= warmup``."""
    per_layer = [[] for _ in range(depth)]
    n = 0
    for rec in trace:
        if rec.grad.t < warmup or not rec.rel_err:
            continue
        n += 1
        for l in range(1, depth + 1):
            e = rec.rel_err[l]
            if e is not None:
                per_layer[l - 1].append(e)
    mean = [float(np.mean(v)) if v else math.nan for v in per_layer]
    mx = [float(np.max(v)) if v else math.nan for v in per_layer]
    return mean, mx, n


def wave_errors(net: LayeredNet, spec: SignalSpec, ticks: int, warmup: int | None = None):
    L = net.depth
    warmup = 2 * L + 2 if warmup is None else warmup
    trace, _ = run(net, spec, ticks)
    mean, mx, n = summarize(trace, L, warmup)
    return trace, mean, mx, n


def run_wave_experiment(config: dict) -> tuple[ErrorReport, list]:
    seed = config_seed(config)
    net = build_net(config, seed)
    spec = build_signal(config.get("signal", {"kind": "constant"}), net, seed)
    ticks = _positive(config, "ticks", 4 * net.depth + 4, integer=True)
    warmup = int(config.get("warmup", 2 * net.depth + 2))
    learn = config.get("learn")
    trace, _ = run(net, spec, ticks, learn=None if learn is None else float(learn))
    L = net.depth
    mean, mx, n = summarize(trace, L, warmup)
    rep = ErrorReport(L, sync_layer(L), [frame_mismatch(l, L) for l in range(1, L + 1)],
                      mean, mx, n)
    if spec.kind == "constant" and learn is None:
        bad = [l + 1 for l, e in enumerate(mx) if not e < CONSTANT_TOL]
        if bad:
            rep.passed = False
            rep.notes.append(f"constant-signal error above {CONSTANT_TOL} at layers {bad}")
    out = config.get("outputs", {})
    if "csv" in out:
        write_trace_csv(trace, _resolve(config, out["csv"]))
    if "frames" in out:
        write_frames_json(trace, _resolve(config, out["frames"]))
    if "report" in out:
        _resolve(config, out["report"]).write_text(json.dumps(rep.to_dict(), indent=1))
    return rep, trace


def run_frequency_sweep(config: dict) -> ErrorReport:
    """One error row per period; ``null`` stands for a constant stream."""
    seed = config_seed(config)
    net = build_net(config, seed)
    periods = config.get("periods")
    if not periods:
        raise ConfigError("sweep needs a non-empty 'periods' list")
    amplitude = float(config.get("amplitude", 0.1))
    ticks = _positive(config, "ticks", 440, integer=True)
    warmup = int(config.get("warmup", 2 * net.depth + 2))
    u, y = base_pair(net, seed)
    L = net.depth

    def one(period):
        p = math.inf if period is None else float(period)
        if p < 2:
            return {"period": period, "resolvable": False}
        spec = SignalSpec.sinusoid(u, y, amplitude, p)
        _, mean, mx, n = wave_errors(net, spec, ticks, warmup)
        return {"period": period, "resolvable": True, "mean_rel_error": mean,
                "max_rel_error": mx, "layer_mean": float(np.mean(mean))}

    workers = int(config.get("workers", min(4, len(periods))))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        rows = list(pool.map(one, periods))

    rep = ErrorReport(L, sync_layer(L), [frame_mismatch(l, L) for l in range(1, L + 1)],
                      [], [], 0, rows=rows)
    ok_rows = sorted((r for r in rows if r["resolvable"]),
                     key=lambda r: -math.inf if r["period"] is None else -float(r["period"]))
    means = [r["layer_mean"] for r in ok_rows]
    rep.passed = all(a <= b for a, b in zip(means, means[1:]))
    if not rep.passed:
        rep.notes.append("mean error is not nondecreasing in signal speed")
    for r in rows:
        if not r["resolvable"]:
            rep.notes.append(f"period {r['period']} is unresolvable (below 2 ticks)")
    out = config.get("outputs", {})
    if "report" in out:
        _resolve(config, out["report"]).write_text(json.dumps(rep.to_dict(), indent=1))
    return rep


def build_cnet(config: dict, seed: int) -> ConstraintNet:
    spec = config.get("cnet")
    if spec is None:
        raise ConfigError("missing 'cnet'")
    if "file" in spec:
        path = _resolve(config, spec["file"])
        if not path.is_file():
            raise ConfigError(f"constraint net file {path} does not exist")
        cnet = ConstraintNet.load(path)
    elif "chain" in spec:
        cnet = chain(spec["chain"], spec.get("activation", "tanh"))
    elif "random_chain" in spec:
        rng = np.random.default_rng([seed, 3])
        n = int(spec["random_chain"])
        cnet = chain(rng.uniform(-1, 1, n - 1), spec.get("activation", "tanh"))
    else:
        raise ConfigError("cnet needs 'file', 'chain' or 'random_chain'")
    if "signal" in config:
        sig = config["signal"]
        try:
            cnet = cnet.with_signal(SignalSpec.from_dict(sig))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad signal spec: {exc}") from exc
    return cnet


def run_lagrangian(config: dict) -> dict:
    seed = config_seed(config)
    cnet = build_cnet(config, seed)
    state = consistent_init(
        cnet,
        t0=float(config.get("t0", 0.0)),
        m_x=_positive(config, "m_x", 1.0),
        m_W=_positive(config, "m_W", 1.0),
        theta=float(config.get("theta", 0.0)),
        lift_velocity=bool(config.get("lift_velocity", False)),
    )
    beta = config.get("stabilize")
    traj = integrate(cnet, state, _positive(config, "dt", 1e-3),
                     _positive(config, "steps", 1000, integer=True),
                     stabilize=None if beta is None else float(beta),
                     record_every=int(config.get("record_every", 1)))
    limit = float(config.get("max_drift", 1e-6))
    report = {"max_drift": traj.max_drift, "limit": limit, "passed": traj.max_drift < limit,
              "final_W": cnet.weights_of(traj.final.W).tolist()}
    out = config.get("outputs", {})
    if "csv" in out:
        traj.write_csv(cnet, _resolve(config, out["csv"]))
    if "report" in out:
        _resolve(config, out["report"]).write_text(json.dumps(report, indent=1))
    return report


def bp_limit_error(cnet: ConstraintNet, u, y, gamma: float = 1.0) -> float:
    """Max entrywise relative gap between the massless-limit weight rate and ``-grad / gamma``.

    Only chain wiring (one neuron per layer) and layered encodings are
    compared, since those are the nets with a layered backprop oracle.
    """
    net = as_layered(cnet)
    xs = forward_instant(net, u)
    xi = np.concatenate(xs)
    Vx = xs[-1] - np.asarray(y, dtype=float)
    delta = bp_limit_deltas(cnet, xi, Vx)
    rate = layer_blocks(net, bp_limit_weight_rate(cnet, xi, delta, gamma))
    grads = backprop_exact(net, u, y)
    scale = max(max(float(np.max(np.abs(g))) for g in grads), 1e-300)
    return max(float(np.max(np.abs(r + g / gamma))) * gamma for r, g in zip(rate, grads)) / scale


def as_layered(cnet: ConstraintNet) -> LayeredNet:
    """Recover the layered net behind a chain or a :func:`from_layered` encoding."""
    if not cnet.is_feedforward:
        raise NotFeedforwardError("backprop limit needs feedforward wiring")
    level = np.zeros(cnet.nu, dtype=int)
    for j, k in cnet.arcs:  # arcs are sorted by target, and k < j
        level[j] = max(level[j], level[k] + 1)
    if np.any(np.diff(level) < 0):
        raise ConfigError("neurons must be numbered layer by layer")
    widths = [int(np.sum(level == d)) for d in range(level.max() + 1)]
    template = new_layered(widths, cnet.activation, init=0)
    if set(from_layered(template).arcs) != set(cnet.arcs):
        raise ConfigError("constraint net is not a dense layered encoding")
    return template.with_weights(layer_blocks(template, cnet.M))


def run_bp_limit_check(config: dict) -> dict:
    seed = config_seed(config)
    if "net" in config:
        net = build_net(config, seed)
        cnet = from_layered(net)
    else:
        cnet = build_cnet(config, seed)
        net = as_layered(cnet)
    u, y = base_pair(net, seed)
    u = np.asarray(config.get("u", u), dtype=float)
    y = np.asarray(config.get("y", y), dtype=float)
    gamma = _positive(config, "gamma", 1.0)
    tol = float(config.get("tol", 1e-10))
    err = bp_limit_error(cnet, u, y, gamma)
    report = {"max_rel_error": err, "tol": tol, "passed": err < tol}
    out = config.get("outputs", {})
    if "report" in out:
        _resolve(config, out["report"]).write_text(json.dumps(report, indent=1))
    return report


# rendering

FWD, BWD, BOTH, NONE = "F", "B", "X", "."


class TraceParseError(ValueError):
    pass


def _check_frames(doc) -> tuple[int, list[dict]]:
    try:
        depth = int(doc["depth"])
        frames = list(doc["frames"])
        for fr in frames:
            if len(fr["filled_fwd"]) != depth + 1 or len(fr["filled_bwd"]) != depth + 1:
                raise TraceParseError("frame width does not match depth")
            int(fr["t"])
    except (KeyError, TypeError, ValueError) as exc:
        raise TraceParseError(f"malformed trace: {exc}") from exc
    return depth, frames


def render_frame(frame: dict, depth: int) -> str:
    """One tick as a column of cells, output layer on top.

    ``X`` both waves present, ``F`` forward only, ``B`` backward only,
    ``.`` empty; the input layer has no backward slot.
    """
    lines = [f"t={frame['t']}"]
    for l in range(depth, -1, -1):
        f = frame["filled_fwd"][l]
        b = frame["filled_bwd"][l] if l > 0 else False
        cell = BOTH if f and b else FWD if f else BWD if b else NONE
        xf = frame.get("x_frame", [None] * (depth + 1))[l]
        df = frame.get("delta_frame", [None] * (depth + 1))[l] if l > 0 else None
        tags = f"{'' if xf is None else xf:>5} {'' if df is None else df:>5}"
        lines.append(f"{l:>3} {cell} {tags}".rstrip())
    return "\n".join(lines)


def render_frames(doc) -> list[str]:
    depth, frames = _check_frames(doc)
    return [render_frame(fr, depth) for fr in frames]


def render_grid(doc) -> str:
    """All ticks side by side: layer rows (output on top) by tick columns."""
    depth, frames = _check_frames(doc)
    rows = []
    for l in range(depth, -1, -1):
        cells = []
        for fr in frames:
            f = fr["filled_fwd"][l]
            b = fr["filled_bwd"][l] if l > 0 else False
            cells.append(BOTH if f and b else FWD if f else BWD if b else NONE)
        rows.append(f"{l:>3} " + "".join(cells))
    return "\n".join(rows)


def load_frames(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise TraceParseError(f"cannot read trace {path}: {exc}") from exc


__all__ = [
    "ConfigError", "ErrorReport", "TraceParseError", "as_layered", "base_pair", "bp_limit_error",
    "build_net", "build_signal", "frames_document", "load_config", "render_frame", "render_frames",
    "render_grid", "run_bp_limit_check", "run_frequency_sweep", "run_lagrangian",
    "run_wave_experiment", "summarize", "wave_errors",
]
