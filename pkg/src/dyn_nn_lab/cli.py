"""Config-driven experiment runner.

Invocation: ``dyn-nn-lab run <config>``, ``dyn-nn-lab list``,
``dyn-nn-lab --version``.  Configs are flat ``key = value`` text with
dotted keys and ``#`` comments; unknown keys are rejected and every run
writes a ``manifest.txt`` that is itself a valid config reproducing the
run byte-for-byte.  Exit codes: 0 success, 2 config error, 3 numerical
divergence verdict.
"""

import math
import os
import sys
import tempfile

import numpy as np

from . import BACKEND, __version__, discrete_ips, meanfield, morse, networks, training
from .errors import ConfigError, DivergenceError
from .numerics import SeededRng

OUTPUT_DIR_ENV = "DYN_NN_LAB_OUTDIR"


# ---------------------------------------------------------------------------
# config schema and parsing
# ---------------------------------------------------------------------------

class Field:
    def __init__(self, kind, default=None, required=False, choices=None):
        self.kind = kind
        self.default = default
        self.required = required
        self.choices = choices


def _parse_value(kind, raw, key):
    raw = raw.strip()
    try:
        if kind == "str":
            return raw
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind == "floats":
            return tuple(float(tok) for tok in raw.replace(",", " ").split())
        if kind == "ints":
            return tuple(int(tok) for tok in raw.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {raw!r} as {kind}") from None
    raise ConfigError(f"key {key!r}: unknown field kind {kind}")


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) if isinstance(x, float) else str(x)
                         for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_COMMON = {
    "experiment": Field("str", required=True),
    "seed": Field("int", default=0),
    "output_dir": Field("str", default=None),
    "plot": Field("bool", default=False),
}


def read_config_file(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file {path!r} does not exist")
    pairs = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"line {ln}: expected 'key = value', got "
                                  f"{stripped!r}")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if key in pairs:
                raise ConfigError(f"duplicate key {key!r}")
            pairs[key] = raw.strip()
    return pairs


def resolve_config(pairs):
    name = pairs.get("experiment")
    if name is None:
        raise ConfigError("missing required key 'experiment'")
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}")
    schema = dict(_COMMON)
    schema.update(EXPERIMENTS[name].schema)
    cfg = {}
    for key, raw in pairs.items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r}")
        cfg[key] = _parse_value(schema[key].kind, raw, key)
    for key, fld in schema.items():
        if key not in cfg:
            if fld.required:
                raise ConfigError(f"missing required key {key!r}")
            cfg[key] = fld.default
    for key, fld in schema.items():
        if fld.choices is not None and cfg[key] is not None \
                and cfg[key] not in fld.choices:
            raise ConfigError(f"key {key!r}: value {cfg[key]!r} not in "
                              f"{sorted(fld.choices)}")
    if cfg["output_dir"] is None:
        cfg["output_dir"] = os.environ.get(OUTPUT_DIR_ENV, ".")
    return cfg


# ---------------------------------------------------------------------------
# output helpers (atomic writes, CSV with 17 significant digits, bare SVG)
# ---------------------------------------------------------------------------

def _atomic_write(path, text):
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_cell(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    text = str(v)
    if any(ch in text for ch in ",\"\n"):
        text = '"' + text.replace('"', '""') + '"'
    return text


def write_csv(path, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(_csv_cell(c) for c in row) for row in rows)
    _atomic_write(path, "\r\n".join(lines) + "\r\n")


def write_manifest(outdir, cfg):
    lines = [
        f"# dyn-nn-lab {__version__} manifest (backend {BACKEND}, "
        f"numpy {np.__version__})",
        "# re-running this file reproduces the outputs byte-identically",
    ]
    for key in sorted(cfg):
        lines.append(f"{key} = {_format_value(cfg[key])}")
    _atomic_write(os.path.join(outdir, "manifest.txt"), "\n".join(lines) + "\n")


def plot_svg(path, xs, series, title, xlabel, ylabel):
    """Minimal hand-emitted polyline chart: axes plus one line per series."""
    width, height, pad = 640, 400, 60
    xs = np.asarray(xs, dtype=float)
    all_y = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    finite = all_y[np.isfinite(all_y)]
    y_lo, y_hi = (float(finite.min()), float(finite.max())) if finite.size \
        else (0.0, 1.0)
    if y_hi - y_lo < 1e-300:
        y_hi = y_lo + 1.0
    x_lo, x_hi = float(xs.min()), float(xs.max())
    if x_hi - x_lo < 1e-300:
        x_hi = x_lo + 1.0

    def sx(x):
        return pad + (x - x_lo) / (x_hi - x_lo) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y_lo) / (y_hi - y_lo) * (height - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
        f'y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" '
        f'stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" '
        f'font-size="14">{title}</text>',
        f'<text x="{width / 2:.0f}" y="{height - 14}" text-anchor="middle" '
        f'font-size="12">{xlabel}</text>',
        f'<text x="16" y="{height / 2:.0f}" text-anchor="middle" '
        f'font-size="12" transform="rotate(-90 16 {height / 2:.0f})">'
        f'{ylabel}</text>',
        f'<text x="{pad}" y="{height - pad + 16}" font-size="10">{x_lo:.4g}</text>',
        f'<text x="{width - pad}" y="{height - pad + 16}" font-size="10" '
        f'text-anchor="end">{x_hi:.4g}</text>',
        f'<text x="{pad - 4}" y="{height - pad}" font-size="10" '
        f'text-anchor="end">{y_lo:.4g}</text>',
        f'<text x="{pad - 4}" y="{pad + 4}" font-size="10" '
        f'text-anchor="end">{y_hi:.4g}</text>',
    ]
    for (label, ys), color in zip(series.items(), colors):
        ys = np.asarray(ys, dtype=float)
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys)
                       if np.isfinite(y))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"><title>{label}</title></polyline>')
    parts.append("</svg>")
    _atomic_write(path, "\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# experiment implementations
# ---------------------------------------------------------------------------

class Experiment:
    def __init__(self, schema, run):
        self.schema = schema
        self.run = run


def _loss_from_cfg(cfg):
    ell = cfg["loss.ell"] or None
    try:
        return training.builtin_loss(cfg["loss.id"], ell=ell, c=cfg["loss.c"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


_LOSS_KEYS = {
    "loss.id": Field("str", default="prod2", choices=set(training.BUILTIN_LOSSES)),
    "loss.ell": Field("str", default="", choices={"", "squared", "mse-half"}),
    "loss.c": Field("float", default=4.0),
}


def _run_edge_of_stability(cfg, rng, outdir):
    model = _loss_from_cfg(cfg)
    config = training.GDConfig(eta=cfg["gd.eta"], max_steps=cfg["gd.steps"],
                               stop_grad_tol=cfg["gd.stop_grad_tol"])
    rows, traj = training.edge_of_stability_trace(model, cfg["gd.theta0"],
                                                  config, stride=cfg["trace.stride"])
    write_csv(os.path.join(outdir, "eos.csv"),
              ["step", "loss", "grad_norm", "sharpness", "threshold"], rows)
    if cfg["plot"]:
        xs = [r[0] for r in rows]
        plot_svg(os.path.join(outdir, "plot_eos.svg"), xs,
                 {"sharpness": [r[3] for r in rows],
                  "threshold": [r[4] for r in rows]},
                 "edge of stability", "step", "sharpness")
    if traj.diverged:
        raise DivergenceError("gradient descent diverged", step=traj.steps)


def _run_lyapunov(cfg, rng, outdir):
    if cfg["lyap.scalars"]:
        mats = np.array([[[float(v)]] for v in cfg["lyap.scalars"]])
        probs = np.asarray(cfg["lyap.probs"], dtype=float) \
            if cfg["lyap.probs"] else None
    else:
        model = _loss_from_cfg(cfg)
        theta_star = np.asarray(cfg["theta_star"], dtype=float)
        mats_list, _ = training.batch_normal_jacobians(
            model, theta_star, cfg["gd.eta"], cfg["batch.size"], rng=rng)
        mats = np.array(mats_list)
        probs = None
    est, se = training.lyapunov_exponent(mats, cfg["lyap.steps"], rng,
                                         replicates=cfg["lyap.replicates"],
                                         probs=probs,
                                         burn_in=cfg["lyap.burn_in"])
    write_csv(os.path.join(outdir, "lyapunov.csv"),
              ["n", "lambda_estimate", "stderr"],
              [(cfg["lyap.steps"], est, se)])


def _run_milnor(cfg, rng, outdir):
    model = _loss_from_cfg(cfg)
    batch = cfg["batch.size"] if cfg["batch.size"] > 0 else None
    result = training.milnor_probe(model, cfg["theta_star"],
                                   radius=cfg["probe.radius"],
                                   samples=cfg["probe.samples"],
                                   eta=cfg["gd.eta"], rng=rng,
                                   horizon=cfg["probe.horizon"],
                                   tol=cfg["probe.tol"], batch_size=batch)
    rows = [(i, int(c)) for i, c in enumerate(result.converged)]
    write_csv(os.path.join(outdir, "milnor.csv"), ["sample", "converged"], rows)


_MORSE_FIELDS = {
    "circle": (lambda x: x[0] ** 2 + x[1] ** 2 - 1.0, 2),
    "xor": (lambda x: x[1] ** 2 - x[0] ** 2, 2),
    "quadratic1d": (lambda x: x[0] ** 2, 1),
    "cubic1d": (lambda x: x[0] ** 3, 1),
    "tanh1d": (lambda x: math.tanh(x[0]), 1),
}


def _run_morse(cfg, rng, outdir):
    fn, dim = _MORSE_FIELDS[cfg["field.id"]]
    lo = cfg["domain.lo"] if cfg["domain.lo"] else tuple([-2.0] * dim)
    hi = cfg["domain.hi"] if cfg["domain.hi"] else tuple([2.0] * dim)
    if len(lo) != dim or len(hi) != dim:
        raise ConfigError(f"key 'domain.lo'/'domain.hi': need {dim} entries")
    report = morse.classify_function(fn, (lo, hi), rng,
                                     starts=cfg["search.starts"],
                                     grad_tol=cfg["search.grad_tol"])
    header, rows, summary = morse.report_rows(report)
    write_csv(os.path.join(outdir, "morse.csv"), header, rows + [summary])


def _net_from_cfg(cfg, delayed):
    if cfg["net.file"]:
        if not os.path.exists(cfg["net.file"]):
            raise ConfigError(f"key 'net.file': {cfg['net.file']!r} does "
                              "not exist")
        return networks.load_network(cfg["net.file"])
    dim = cfg["node.dim"]
    vf_params = {"scale": cfg["vf.scale"], "rate": cfg["vf.rate"]}
    if cfg["vf.id"] == "tanh-net":
        # default saturating-net parameterization at the requested width
        half_eye = (0.5 * np.eye(dim)).tolist()
        vf_params = {"W1": half_eye, "b1": [0.0] * dim,
                     "W2": half_eye, "b2": [0.0] * dim}
    eye = np.eye(dim)
    zero = np.zeros(dim)
    common = dict(d=dim, m=dim, q=dim, W=eye, b=zero, W_tilde=eye,
                  b_tilde=zero, T=cfg["node.T"], step_count=cfg["node.steps"],
                  vector_field_id=cfg["vf.id"], vf_params=vf_params)
    if delayed:
        return networks.NeuralDDESpec(
            vector_field=networks.delayed_field(cfg["vf.id"], vf_params,
                                                cfg["ndde.tau"]),
            tau=cfg["ndde.tau"], **common)
    return networks.NeuralODESpec(
        vector_field=networks.make_vector_field(cfg["vf.id"], vf_params),
        **common)


def _run_node_forward(cfg, rng, outdir):
    spec = _net_from_cfg(cfg, delayed=False)
    x = np.asarray(cfg["node.x"], dtype=float)
    if isinstance(spec, networks.MLPSpec):
        out = networks.mlp_forward(spec, x)
    elif isinstance(spec, networks.NeuralDDESpec):
        out = networks.ndde_forward(spec, x)
    else:
        out = networks.node_forward(spec, x)
    write_csv(os.path.join(outdir, "output.csv"), ["component", "value"],
              list(enumerate(out)))


def _run_ndde_forward(cfg, rng, outdir):
    spec = _net_from_cfg(cfg, delayed=True)
    if isinstance(spec, (networks.MLPSpec, networks.NeuralODESpec)):
        raise ConfigError("key 'net.file': ndde-forward needs a delay network")
    x = np.asarray(cfg["node.x"], dtype=float)
    out = networks.ndde_forward(spec, x)
    write_csv(os.path.join(outdir, "output.csv"), ["component", "value"],
              list(enumerate(out)))


def _run_memory_report(cfg, rng, outdir):
    target = None
    if cfg["target.k_psi"] >= 0:
        target = (cfg["target.k_psi"], cfg["target.w"], cfg["target.w_tilde"])
    rep = networks.memory_report(cfg["memory.K"], cfg["memory.tau"], target)
    rows = [("K", rep.K), ("tau", rep.tau),
            ("memory_capacity", rep.memory_capacity),
            ("capacity_times_e", rep.memory_capacity * math.e),
            ("small_memory_flag", int(rep.small_memory_flag))]
    if target is not None:
        rows.append(("embed_capable_flag", int(rep.embed_capable_flag)))
    write_csv(os.path.join(outdir, "memory.csv"), ["quantity", "value"], rows)


def _zoo_from_cfg(cfg, m):
    mid = cfg["model.id"]
    k = cfg["model.K"]
    if mid == "kuramoto":
        omega = cfg["model.omega"] if cfg["model.omega"] else (0.0,)
        return meanfield.kuramoto(k, omega)
    if mid == "desai_zwanzig":
        return meanfield.desai_zwanzig(k)
    if mid == "hegselmann_krause":
        return meanfield.hegselmann_krause(k, cfg["model.c"], cfg["model.d"])
    if mid == "cucker_smale":
        return meanfield.cucker_smale(k, cfg["model.alpha"])
    if mid == "hopfield_cts":
        a = k / m * (np.ones((m, m)) - np.eye(m))
        return meanfield.hopfield_cts(cfg["model.alpha"], cfg["model.b"], a)
    if mid == "transformer":
        dim = cfg["model.dim"]
        return meanfield.transformer_ode(cfg["model.m1_scale"] * np.eye(dim),
                                         cfg["model.m2_scale"] * np.eye(dim),
                                         cfg["model.m3_scale"] * np.eye(dim))
    raise ConfigError(f"key 'model.id': unknown model {mid!r}")


def _graph_from_cfg(cfg, model):
    kind = cfg["graph.kind"]
    if kind == "default":
        return model.default_graph
    if kind == "all-to-all":
        return meanfield.AllToAll(cfg["model.K"])
    if kind == "graphon":
        params = {"c": cfg["graph.c"], "p_in": cfg["graph.p_in"],
                  "p_out": cfg["graph.p_out"], "split": cfg["graph.split"]}
        try:
            g = meanfield.make_graphon(cfg["graph.graphon_id"], params)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return meanfield.GraphonCells(g)
    raise ConfigError(f"key 'graph.kind': unknown kind {kind!r}")


def _initial_states(cfg, model, m, rng):
    kind = cfg["init.kind"]
    gen = rng.gen
    if kind == "equispaced":
        base = np.arange(m) * (2.0 * math.pi / m)
    elif kind == "uniform-random":
        width = 2.0 * math.pi if model.phase_space == "circle" else 2.0
        base = gen.uniform(0.0, width, size=m)
    elif kind == "bump":
        grid = meanfield.bump_density(512, center=cfg["init.center"])
        base = meanfield.sample_from_density(grid, m, gen)
    else:
        raise ConfigError(f"key 'init.kind': unknown kind {kind!r}")
    if model.dim == 1:
        return base[:, None]
    states = np.zeros((m, model.dim))
    states[:, 0] = base
    states[:, 1] = gen.normal(scale=0.3, size=m)
    return states


def _run_ips_simulate(cfg, rng, outdir):
    m = cfg["ips.M"]
    model = _zoo_from_cfg(cfg, m)
    graph = _graph_from_cfg(cfg, model)
    x0 = _initial_states(cfg, model, m, rng)
    traj = meanfield.simulate_ips(model, graph, x0, cfg["ips.dt"], cfg["ips.T"],
                                  record_every=cfg["ips.record_every"])
    if model.phase_space == "circle":
        rows = [(t, meanfield.order_parameter(s))
                for t, s in zip(traj.times, traj.states)]
        write_csv(os.path.join(outdir, "order.csv"),
                  ["t", "order_parameter"], rows)
        if cfg["plot"]:
            plot_svg(os.path.join(outdir, "plot_order.svg"),
                     [r[0] for r in rows], {"r": [r[1] for r in rows]},
                     "synchrony", "t", "order parameter")
    final = traj.final()
    rows = [(i,) + tuple(final[i]) for i in range(m)]
    write_csv(os.path.join(outdir, "final_state.csv"),
              ["particle"] + [f"x{d + 1}" for d in range(model.dim)], rows)


def _run_meanfield_converge(cfg, rng, outdir):
    if not cfg["mf.Ms"]:
        raise ConfigError("key 'mf.Ms': need at least one particle count")
    table, _ = meanfield.meanfield_convergence_study(
        list(cfg["mf.Ms"]), cfg["mf.seeds"], cfg["mf.K"], cfg["mf.T"],
        cfg["mf.dt"], cfg["grid.cells"], rng,
        particle_dt=cfg["mf.particle_dt"])
    write_csv(os.path.join(outdir, "converge.csv"), ["M", "sup_w1"], table)
    if cfg["plot"]:
        plot_svg(os.path.join(outdir, "plot_converge.svg"),
                 [r[0] for r in table], {"sup_w1": [r[1] for r in table]},
                 "mean-field convergence", "M", "sup-t W1")


def _run_dobrushin(cfg, rng, outdir):
    cells = cfg["grid.cells"]
    shift = cfg["bumps.shift"]
    g1 = meanfield.bump_density(cells, center=math.pi - 0.5 * shift)
    g2 = meanfield.bump_density(cells, center=math.pi + 0.5 * shift)
    lip = cfg["mf.L"] if cfg["mf.L"] >= 0 else cfg["mf.K"]
    rows = meanfield.dobrushin_check(g1, g2, cfg["mf.K"], cfg["mf.T"],
                                     cfg["mf.dt"], lip)
    write_csv(os.path.join(outdir, "dobrushin.csv"), ["t", "w1", "bound"], rows)
    if cfg["plot"]:
        plot_svg(os.path.join(outdir, "plot_dobrushin.svg"),
                 [r[0] for r in rows],
                 {"w1": [r[1] for r in rows], "bound": [r[2] for r in rows]},
                 "Dobrushin estimate", "t", "W1")


def _run_vlasov(cfg, rng, outdir):
    cells = cfg["grid.cells"]
    omegas = cfg["vl.omegas"] if cfg["vl.omegas"] else (0.0,)
    zeta = cfg["vl.zeta"] if cfg["vl.zeta"] else None
    if cfg["init.kind"] == "bump":
        grid = meanfield.bump_density(cells, center=cfg["init.center"],
                                      omegas=omegas, zeta=zeta)
    else:
        grid = meanfield.uniform_density(cells, omegas=omegas, zeta=zeta)
    n_steps = int(round(cfg["vl.T"] / cfg["vl.dt"]))
    every = max(n_steps // max(cfg["snapshots.count"], 1), 1)
    res = meanfield.vlasov_kuramoto_solve(grid, cfg["vl.K"], cfg["vl.T"],
                                          cfg["vl.dt"], record_every=every)
    xc = grid.centers
    for k, snap in enumerate(res.snapshots):
        for r in range(snap.shape[0]):
            write_csv(os.path.join(outdir, f"density_t{k}_w{r}.csv"),
                      ["x", "u"], list(zip(xc, snap[r])))
    rows = [(t, meanfield.density_order_parameter(s, grid.zeta))
            for t, s in zip(res.times, res.snapshots)]
    write_csv(os.path.join(outdir, "order.csv"), ["t", "order_parameter"], rows)
    if cfg["plot"]:
        plot_svg(os.path.join(outdir, "plot_density.svg"), xc,
                 {f"t{k}": snap[0] for k, snap in enumerate(res.snapshots)},
                 "density evolution", "x", "u")


def _spin_net_from_cfg(cfg):
    m = cfg["spin.M"]
    a = cfg["spin.coupling"] * (np.ones((m, m)) - np.eye(m))
    b = np.asarray(cfg["spin.b"], dtype=float) if cfg["spin.b"] \
        else np.zeros(m)
    if b.shape != (m,):
        raise ConfigError(f"key 'spin.b': need {m} entries")
    return discrete_ips.SpinNetwork(a=a, b=b)


def _run_boltzmann(cfg, rng, outdir):
    net = _spin_net_from_cfg(cfg)
    if net.m > 12:
        raise ConfigError("key 'spin.M': stationarity check capped at M <= 12")
    exact = discrete_ips.boltzmann_exact_distribution(net)
    write_csv(os.path.join(outdir, "exact.csv"), ["state_index", "probability"],
              list(enumerate(exact)))
    rows = []
    for steps in cfg["chain.steps"]:
        chk = discrete_ips.gibbs_stationary_check(
            net, steps, cfg["chain.burn_in"], rng.child(steps),
            convention=cfg["spin.convention"])
        rows.append((steps, chk.tv_distance))
    write_csv(os.path.join(outdir, "tv.csv"), ["steps", "tv_distance"], rows)


def _run_kl_objective(cfg, rng, outdir):
    net = _spin_net_from_cfg(cfg)
    d = cfg["kl.visible"]
    if cfg["kl.pplus"]:
        p_plus = np.asarray(cfg["kl.pplus"], dtype=float)
    else:
        p_plus = np.zeros(2 ** d)
        p_plus[0] = 1.0
    try:
        kl = discrete_ips.kl_objective(p_plus, net, d)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    write_csv(os.path.join(outdir, "kl.csv"), ["quantity", "value"],
              [("kl_divergence", kl)])


def _run_vanishing_gradient(cfg, rng, outdir):
    trace = training.vanishing_gradient_demo(cfg["vg.epsilon"],
                                             cfg["vg.horizon"], cfg["vg.dt"])
    write_csv(os.path.join(outdir, "vg.csv"),
              ["t", "p1", "p2", "exact1", "exact2"], trace.rows)
    if cfg["plot"]:
        plot_svg(os.path.join(outdir, "plot_vg.svg"),
                 [r[0] for r in trace.rows],
                 {"p1": [r[1] for r in trace.rows],
                  "p2": [r[2] for r in trace.rows]},
                 "vanishing gradient", "t", "components")


def _run_variational_check(cfg, rng, outdir):
    stages = [training.Stage.from_scalar(lambda x: x * x, lambda x: 2 * x),
              training.Stage.from_scalar(math.sin, math.cos)]
    x0 = [cfg["var.x0"]]
    _, fwd = training.variational_propagate(stages, x0, seed=[1.0],
                                            mode="forward")
    _, rev = training.variational_propagate(stages, x0, cotangent=[1.0],
                                            mode="reverse")
    h = 1e-6
    fd = (math.sin((cfg["var.x0"] + h) ** 2)
          - math.sin((cfg["var.x0"] - h) ** 2)) / (2 * h)
    write_csv(os.path.join(outdir, "variational.csv"), ["mode", "derivative"],
              [("forward", float(fwd[0])), ("reverse", float(rev[0])),
               ("finite_diff", fd)])


EXPERIMENTS = {
    "edge-of-stability": Experiment({
        **_LOSS_KEYS,
        "gd.eta": Field("float", required=True),
        "gd.steps": Field("int", default=20_000),
        "gd.stop_grad_tol": Field("float", default=1e-13),
        "gd.theta0": Field("floats", required=True),
        "trace.stride": Field("int", default=10),
    }, _run_edge_of_stability),
    "lyapunov": Experiment({
        **_LOSS_KEYS,
        "lyap.scalars": Field("floats", default=()),
        "lyap.probs": Field("floats", default=()),
        "theta_star": Field("floats", default=(0.0,)),
        "gd.eta": Field("float", default=0.4),
        "batch.size": Field("int", default=1),
        "lyap.steps": Field("int", default=100_000),
        "lyap.replicates": Field("int", default=20),
        "lyap.burn_in": Field("int", default=0),
    }, _run_lyapunov),
    "milnor-probe": Experiment({
        **_LOSS_KEYS,
        "theta_star": Field("floats", default=(0.0,)),
        "gd.eta": Field("float", required=True),
        "batch.size": Field("int", default=0),
        "probe.radius": Field("float", default=0.1),
        "probe.samples": Field("int", default=500),
        "probe.horizon": Field("int", default=200),
        "probe.tol": Field("float", default=1e-6),
    }, _run_milnor),
    "morse-classify": Experiment({
        "field.id": Field("str", required=True, choices=set(_MORSE_FIELDS)),
        "domain.lo": Field("floats", default=()),
        "domain.hi": Field("floats", default=()),
        "search.starts": Field("int", default=64),
        "search.grad_tol": Field("float", default=morse.GRAD_TOL),
    }, _run_morse),
    "node-forward": Experiment({
        "net.file": Field("str", default=""),
        "vf.id": Field("str", default="linear",
                       choices=set(networks.VECTOR_FIELDS)),
        "vf.scale": Field("float", default=1.0),
        "vf.rate": Field("float", default=1.0),
        "node.dim": Field("int", default=1),
        "node.T": Field("float", default=1.0),
        "node.steps": Field("int", default=100),
        "node.x": Field("floats", required=True),
    }, _run_node_forward),
    "ndde-forward": Experiment({
        "net.file": Field("str", default=""),
        "vf.id": Field("str", default="decay",
                       choices=set(networks.VECTOR_FIELDS)),
        "vf.scale": Field("float", default=1.0),
        "vf.rate": Field("float", default=1.0),
        "node.dim": Field("int", default=1),
        "node.T": Field("float", default=1.0),
        "node.steps": Field("int", default=100),
        "node.x": Field("floats", required=True),
        "ndde.tau": Field("float", default=0.5),
    }, _run_ndde_forward),
    "memory-report": Experiment({
        "memory.K": Field("float", required=True),
        "memory.tau": Field("float", required=True),
        "target.k_psi": Field("float", default=-1.0),
        "target.w": Field("float", default=1.0),
        "target.w_tilde": Field("float", default=1.0),
    }, _run_memory_report),
    "ips-simulate": Experiment({
        "model.id": Field("str", default="kuramoto",
                          choices=set(meanfield.MODEL_ZOO)),
        "model.K": Field("float", default=1.0),
        "model.omega": Field("floats", default=()),
        "model.c": Field("float", default=1.0),
        "model.d": Field("float", default=1.0),
        "model.alpha": Field("float", default=1.0),
        "model.b": Field("float", default=0.0),
        "model.dim": Field("int", default=2),
        "model.m1_scale": Field("float", default=0.0),
        "model.m2_scale": Field("float", default=0.0),
        "model.m3_scale": Field("float", default=-1.0),
        "graph.kind": Field("str", default="default",
                            choices={"default", "all-to-all", "graphon"}),
        "graph.graphon_id": Field("str", default="constant",
                                  choices=set(meanfield.GRAPHONS)),
        "graph.c": Field("float", default=1.0),
        "graph.p_in": Field("float", default=1.0),
        "graph.p_out": Field("float", default=0.2),
        "graph.split": Field("float", default=0.5),
        "ips.M": Field("int", default=64),
        "ips.T": Field("float", default=5.0),
        "ips.dt": Field("float", default=0.01),
        "ips.record_every": Field("int", default=10),
        "init.kind": Field("str", default="uniform-random",
                           choices={"uniform-random", "equispaced", "bump"}),
        "init.center": Field("float", default=math.pi),
    }, _run_ips_simulate),
    "meanfield-converge": Experiment({
        "mf.Ms": Field("ints", required=True),
        "mf.seeds": Field("int", default=10),
        "mf.K": Field("float", default=1.0),
        "mf.T": Field("float", default=2.0),
        "mf.dt": Field("float", default=0.004),
        "mf.particle_dt": Field("float", default=0.04),
        "grid.cells": Field("int", default=512),
    }, _run_meanfield_converge),
    "dobrushin": Experiment({
        "mf.K": Field("float", default=1.0),
        "mf.L": Field("float", default=-1.0),
        "mf.T": Field("float", default=2.0),
        "mf.dt": Field("float", default=0.004),
        "grid.cells": Field("int", default=256),
        "bumps.shift": Field("float", default=1.0),
    }, _run_dobrushin),
    "vlasov": Experiment({
        "vl.K": Field("float", default=1.0),
        "vl.T": Field("float", default=5.0),
        "vl.dt": Field("float", default=0.005),
        "vl.omegas": Field("floats", default=()),
        "vl.zeta": Field("floats", default=()),
        "grid.cells": Field("int", default=128),
        "snapshots.count": Field("int", default=5),
        "init.kind": Field("str", default="bump",
                           choices={"uniform", "bump"}),
        "init.center": Field("float", default=math.pi),
    }, _run_vlasov),
    "boltzmann-stationary": Experiment({
        "spin.M": Field("int", default=2),
        "spin.coupling": Field("float", default=2.0),
        "spin.b": Field("floats", default=()),
        "spin.convention": Field("str", default="balanced",
                                 choices={"balanced", "literal"}),
        "chain.steps": Field("ints", default=(100_000, 1_000_000)),
        "chain.burn_in": Field("int", default=10_000),
    }, _run_boltzmann),
    "kl-objective": Experiment({
        "spin.M": Field("int", default=2),
        "spin.coupling": Field("float", default=0.0),
        "spin.b": Field("floats", default=()),
        "kl.visible": Field("int", default=1),
        "kl.pplus": Field("floats", default=()),
    }, _run_kl_objective),
    "vanishing-gradient": Experiment({
        "vg.epsilon": Field("float", default=0.01),
        "vg.horizon": Field("float", default=5.0),
        "vg.dt": Field("float", default=0.01),
    }, _run_vanishing_gradient),
    "variational-check": Experiment({
        "var.x0": Field("float", default=0.5),
    }, _run_variational_check),
}


# ---------------------------------------------------------------------------
# registry listing and entry point
# ---------------------------------------------------------------------------

def list_registry():
    lines = []
    for group, ids in (
        ("losses", training.BUILTIN_LOSSES),
        ("vector-fields", networks.VECTOR_FIELDS),
        ("graphons", meanfield.GRAPHONS),
        ("models", meanfield.MODEL_ZOO),
        ("experiments", EXPERIMENTS),
    ):
        for name in sorted(ids):
            lines.append(f"{group}: {name}")
    return lines


def run(config_path):
    cfg = resolve_config(read_config_file(config_path))
    outdir = cfg["output_dir"]
    os.makedirs(outdir, exist_ok=True)
    rng = SeededRng(cfg["seed"])
    exp = EXPERIMENTS[cfg["experiment"]]
    write_manifest(outdir, cfg)
    exp.run(cfg, rng, outdir)
    return outdir


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv or argv[0] in ("-h", "--help"):
        print("usage: dyn-nn-lab run <config> | dyn-nn-lab list | "
              "dyn-nn-lab --version")
        return 0
    if argv[0] == "--version":
        print(f"dyn-nn-lab {__version__}")
        return 0
    if argv[0] == "list":
        for line in list_registry():
            print(line)
        return 0
    if argv[0] == "run":
        if len(argv) != 2:
            print("error: run takes exactly one config file", file=sys.stderr)
            return 2
        try:
            outdir = run(argv[1])
        except DivergenceError as exc:
            print(f"divergence: {exc}", file=sys.stderr)
            return 3
        except ValueError as exc:
            # ConfigError and the library's contract violations both land
            # here; anything else is a genuine bug and may traceback
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        print(f"wrote artifacts to {outdir}")
        return 0
    print(f"error: unknown command {argv[0]!r}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
