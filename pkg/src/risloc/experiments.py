"""
Experiment configuration, the three numerical experiments, CSV output and
plot-script emission.

Every experiment is a pure function of its config: each Monte-Carlo
realisation ``r`` draws its gains, initial phases and pilot from a generator
seeded by ``(config.seed, r, N)``, so rows do not depend on execution order
or on the number of worker processes.
"""
from concurrent.futures import ProcessPoolExecutor
import csv
import dataclasses
from dataclasses import dataclass, field
import io
import json
import math
import re
import time

import numpy as np

from .beamforming import GdmConfig, gdm_optimize
from .channel import ArrayConfig, PILOT_MODES, make_pilot, snr_to_power
from .errors import ConfigError, DegenerateGeometry, LineSearchFailed, SingularFim
from .fim import kappa_from_geometry, crlb_of_phases
from .geometry import RisLayout, ScenarioGeometry, compute_aod, expand_layout
from .scenario import draw_gains

NOISE_VARIANCE = 1.0

COLUMNS = ["experiment", "axis", "seed", "n_elements", "n_slots", "snr_db",
           "ms_x", "ms_y", "iteration", "crlb", "crlb_initial", "status"]


@dataclass(frozen=True)
class ScenarioConfig:
    """All knobs of an experiment; defaults give the reference set-up.

    ``ris_rows``/``ris_cols`` size the RIS for ``convergence`` and ``crlb``;
    ``ris_sizes`` (perfect squares) are the element counts swept by ``sweep``
    and ``position-sweep``.
    """
    wavelength: float = 0.006
    antenna_spacing: float = 0.003
    n_tx: int = 10
    n_rx: int = 10
    bs_pos: tuple = (0.0, 0.0, 0.0)
    ms_pos: tuple = (50.0, 100.0, 0.0)
    ris_rows: int = 5
    ris_cols: int = 5
    ris_spacing: float = 0.1
    ris_reference: tuple = (-20.0, 50.0, 20.0)
    ris_plane: str = "xz"
    snr_db: tuple = (30.0, 40.0)
    slots: tuple = (1,)
    seed: int = 0
    pilot_mode: str = "steered"
    n_seeds: int = 20
    ris_sizes: tuple = (16, 25, 36)
    x_range: tuple = (0.0, 100.0)
    y_range: tuple = (50.0, 150.0)
    position_points: int = 11
    workers: int = 1
    gdm: GdmConfig = field(default_factory=GdmConfig)

    def __post_init__(self):
        try:
            self.array
            self.layout()
            for n in self.ris_sizes:
                self.layout(n)
            ScenarioGeometry.from_layout(self.bs_pos, self.ms_pos, self.layout())
        except ConfigError:
            raise
        except (ValueError, TypeError) as e:
            raise ConfigError(str(e)) from e
        if not self.snr_db or not self.slots:
            raise ConfigError("snr_db and slots must be non-empty",
                              field="snr_db" if not self.snr_db else "slots")
        if any(int(L) < 1 for L in self.slots):
            raise ConfigError("slots: every entry must be >= 1", field="slots")
        if self.pilot_mode not in PILOT_MODES:
            raise ConfigError(f"pilot_mode: expected one of {PILOT_MODES}, got {self.pilot_mode!r}",
                              field="pilot_mode")
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be >= 1", field="n_seeds")
        if self.position_points < 2:
            raise ConfigError("position_points must be >= 2", field="position_points")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1", field="workers")

    @property
    def array(self):
        return ArrayConfig(self.n_tx, self.n_rx, self.antenna_spacing, self.wavelength)

    def layout(self, n_elements=None):
        if n_elements is None:
            rows, cols = self.ris_rows, self.ris_cols
        else:
            side = math.isqrt(int(n_elements))
            if side * side != n_elements:
                raise ConfigError(f"ris_sizes: {n_elements} is not a perfect square",
                                  field="ris_sizes")
            rows = cols = side
        return RisLayout(rows, cols, self.ris_spacing, self.ris_reference, self.ris_plane)

    def to_dict(self):
        d = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "gdm":
                v = dataclasses.asdict(v)
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - set(known))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}", field=unknown[0])
        kwargs = {}
        for name, value in d.items():
            kwargs[name] = _coerce(name, known[name], value)
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text, base=None):
        """Parse a JSON document; keys it omits come from ``base`` (default: class defaults).

        Errors name the offending field and, when it can be located, its line.
        """
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
        if base is not None and isinstance(d, dict):
            d = {**base.to_dict(), **d}
        try:
            return cls.from_dict(d)
        except ConfigError as e:
            line = _locate(text, e.field)
            if line is not None:
                raise ConfigError(f"line {line}: {e}", field=e.field) from None
            raise

    @classmethod
    def load(cls, path, base=None):
        with open(path) as fh:
            return cls.from_json(fh.read(), base)


def _locate(text, key):
    if not key:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


_INT_FIELDS = {"n_tx", "n_rx", "ris_rows", "ris_cols", "seed", "n_seeds", "position_points",
               "workers"}
_FLOAT_FIELDS = {"wavelength", "antenna_spacing", "ris_spacing"}
_STR_FIELDS = {"ris_plane", "pilot_mode"}
_VECTOR_FIELDS = {"bs_pos": 3, "ms_pos": 3, "ris_reference": 3, "x_range": 2, "y_range": 2}


def _coerce(name, f, value):
    def bad(expected):
        return ConfigError(f"{name}: expected {expected}, got {value!r}", field=name)

    if name == "gdm":
        if not isinstance(value, dict):
            raise bad("an object")
        fields = {g.name for g in dataclasses.fields(GdmConfig)}
        unknown = sorted(set(value) - fields)
        if unknown:
            raise ConfigError(f"gdm: unknown key(s): {', '.join(unknown)}", field=unknown[0])
        try:
            return GdmConfig(**value)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"gdm: {e}", field="gdm") from e
    if name in _INT_FIELDS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad("an integer")
        return value
    if name in _FLOAT_FIELDS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad("a number")
        return float(value)
    if name in _STR_FIELDS:
        if not isinstance(value, str):
            raise bad("a string")
        return value
    if not isinstance(value, list):
        raise bad("a list")
    if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
        raise bad("a list of numbers")
    if name in _VECTOR_FIELDS:
        if len(value) != _VECTOR_FIELDS[name]:
            raise bad(f"{_VECTOR_FIELDS[name]} numbers")
        return tuple(float(v) for v in value)
    if name in ("slots", "ris_sizes"):
        if any(not isinstance(v, int) for v in value):
            raise bad("a list of integers")
        return tuple(value)
    return tuple(float(v) for v in value)   # snr_db


def default_config(experiment="convergence"):
    """Reference-scale defaults for each experiment."""
    base = ScenarioConfig()
    if experiment == "sweep":
        return dataclasses.replace(base, snr_db=(20.0, 30.0, 40.0), slots=tuple(range(1, 11)))
    if experiment == "position-sweep":
        return dataclasses.replace(base, snr_db=(30.0,), slots=(1,))
    return base


# -- realisations -------------------------------------------------------------

@dataclass(frozen=True)
class Realization:
    """Random quantities shared by all cells with the same (seed, r, N)."""
    gains: np.ndarray
    initial_phases: np.ndarray
    pilot_seed: int


def realization(config, r, n_elements):
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, r, n_elements]))
    gains = draw_gains(rng, n_elements)
    phases = rng.uniform(0.0, 2 * np.pi, n_elements)
    return Realization(gains, phases, int(rng.integers(2**63)))


def build_pilot(config, ris_elements, n_slots, snr_db, pilot_seed, p_bs=None):
    """Pilot at ``SNR = p_bs / (N_r * s2)`` with ``s2 = 1``.

    Steered pilots point at the RIS centroid. Random pilots with the same
    seed are nested in ``n_slots`` and identical across SNRs up to scale.
    An explicit ``p_bs`` overrides the SNR.
    """
    cfg = config.array
    if p_bs is None:
        p_bs = snr_to_power(snr_db, cfg.n_rx, NOISE_VARIANCE)
    steer = compute_aod(np.asarray(config.bs_pos), ris_elements.mean(axis=0))
    return make_pilot(cfg, n_slots, p_bs, seed=pilot_seed, mode=config.pilot_mode, steer=steer)


def optimize_cell(config, geometry, real, n_slots, snr_db, initial=None):
    """Run descent for one cell; returns ``(trace, crlb_initial, status)``.

    ``initial`` overrides the realisation's random starting phases.
    The FIM depends on pilot power and noise only through ``p_bs / s2``, so
    kappa is built once from a unit-power pilot and the SNR enters as the
    effective noise variance ``s2 / p_bs``. CRLBs at different SNRs then
    differ by an exact scalar factor instead of by rounding in the pilot.
    """
    pilot = build_pilot(config, geometry.ris_elements, n_slots, snr_db, real.pilot_seed, p_bs=1.0)
    kappa = kappa_from_geometry(geometry, real.gains, pilot, config.array)
    s2 = NOISE_VARIANCE / snr_to_power(snr_db, config.array.n_rx, NOISE_VARIANCE)
    start = real.initial_phases if initial is None else initial
    try:
        f0 = crlb_of_phases(kappa, real.initial_phases, s2)
    except SingularFim:
        f0 = math.nan
    try:
        trace = gdm_optimize(kappa, start, s2, config.gdm)
    except LineSearchFailed as e:
        trace = e.trace
    return trace, f0, trace.status


# -- experiments --------------------------------------------------------------

def _row(experiment, **kw):
    row = dict.fromkeys(COLUMNS, "")
    row["experiment"] = experiment
    row.update(kw)
    return row


def _convergence_job(config, r):
    geometry = ScenarioGeometry.from_layout(config.bs_pos, config.ms_pos, config.layout())
    real = realization(config, r, geometry.n_paths)
    rows = []
    for L in config.slots:
        for snr in config.snr_db:
            trace, f0, status = optimize_cell(config, geometry, real, L, snr)
            common = dict(seed=r, n_elements=geometry.n_paths, n_slots=L, snr_db=snr,
                          ms_x=config.ms_pos[0], ms_y=config.ms_pos[1], crlb_initial=f0)
            if not trace.records:
                rows.append(_row("convergence", iteration=0, status=status, **common))
            for rec in trace.records:
                rows.append(_row("convergence", iteration=rec.iteration, crlb=rec.objective,
                                 status=status, **common))
    return rows


def _sweep_job(config, n_elements, snr, r):
    """One (N, SNR, realisation) chain over increasing slot counts.

    Each slot count is warm-started from the optimum of the previous one;
    pilots are nested, so the CRLB at the warm start already cannot exceed
    the previous optimum.
    """
    geometry = ScenarioGeometry.from_layout(config.bs_pos, config.ms_pos, config.layout(n_elements))
    real = realization(config, r, n_elements)
    rows, start = [], None
    for L in sorted(config.slots):
        trace, f0, status = optimize_cell(config, geometry, real, L, snr, initial=start)
        crlb = trace.final_objective if trace.records else ""
        if trace.records:
            start = trace.phases
        rows.append(_row("sweep", seed=r, n_elements=n_elements, n_slots=L, snr_db=snr,
                         ms_x=config.ms_pos[0], ms_y=config.ms_pos[1], iteration=-1,
                         crlb=crlb, crlb_initial=f0, status=status))
    return rows


def position_grid(config):
    xs = np.linspace(*config.x_range, config.position_points)
    ys = np.linspace(*config.y_range, config.position_points)
    return ([("x", (x, config.ms_pos[1])) for x in xs]
            + [("y", (config.ms_pos[0], y)) for y in ys])


def _position_job(config, n_elements, r):
    ris = expand_layout(config.layout(n_elements))
    real = realization(config, r, n_elements)
    rows = []
    for axis, (x, y) in position_grid(config):
        common = dict(axis=axis, seed=r, n_elements=n_elements, n_slots=config.slots[0],
                      snr_db=config.snr_db[0], ms_x=x, ms_y=y, iteration=-1)
        try:
            geometry = ScenarioGeometry(config.bs_pos, (x, y, 0.0), ris)
        except DegenerateGeometry:
            rows.append(_row("position-sweep", status="degenerate", **common))
            continue
        trace, f0, status = optimize_cell(config, geometry, real, config.slots[0],
                                          config.snr_db[0])
        crlb = trace.final_objective if trace.records else ""
        rows.append(_row("position-sweep", crlb=crlb, crlb_initial=f0, status=status, **common))
    return rows


def _call(args):
    fn, a = args
    return fn(*a)


def _run_jobs(config, jobs, timing=False):
    """Evaluate jobs (in order, optionally in worker processes) and flatten rows."""
    tasks = [(fn, (config,) + args) for fn, args in jobs]
    if timing:
        tasks = [(_timed, (fn, a)) for fn, a in tasks]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as ex:
            results = list(ex.map(_call, tasks))
    else:
        results = [_call(t) for t in tasks]
    return [row for rows in results for row in rows]


def _timed(fn, args):
    t0 = time.perf_counter()
    rows = fn(*args)
    ms = (time.perf_counter() - t0) * 1e3 / max(len(rows), 1)
    for row in rows:
        row["wall_ms"] = ms
    return rows


def run_convergence(config, timing=False):
    """GDM trace per (realisation, slots, SNR): one row per iteration."""
    jobs = [(_convergence_job, (r,)) for r in range(config.n_seeds)]
    return _run_jobs(config, jobs, timing)


def run_sweep(config, timing=False):
    """Optimised CRLB over (N, SNR, L), per realisation plus the seed mean.

    Mean rows carry ``seed = -1`` and ``status = "mean"``; a cell whose
    realisations did not all succeed gets ``status = "mean_partial"``.
    """
    jobs = [(_sweep_job, (n, snr, r)) for n in config.ris_sizes for snr in config.snr_db
            for r in range(config.n_seeds)]
    rows = _run_jobs(config, jobs, timing)
    return rows + _mean_rows(rows, "sweep", ("n_elements", "snr_db", "n_slots"))


def run_position_sweep(config, timing=False):
    """Optimised CRLB along the x and y MS sweeps for every RIS size."""
    jobs = [(_position_job, (n, r)) for n in config.ris_sizes for r in range(config.n_seeds)]
    rows = _run_jobs(config, jobs, timing)
    return rows + _mean_rows(rows, "position-sweep", ("n_elements", "axis", "ms_x", "ms_y"))


def _mean_rows(rows, experiment, keys):
    groups = {}
    for row in rows:
        groups.setdefault(tuple(row[k] for k in keys), []).append(row)
    out = []
    for key, members in groups.items():
        vals = [m["crlb"] for m in members if m["crlb"] != ""]
        base = dict(members[0])
        base.pop("wall_ms", None)
        base.update(seed=-1, crlb_initial="",
                    crlb=float(np.mean(vals)) if vals else "",
                    status=("mean" if len(vals) == len(members)
                            else "mean_partial" if vals else "mean_none"))
        out.append(_row(experiment, **{k: base[k] for k in COLUMNS if k != "experiment"}))
    return out


def evaluate_crlb(config):
    """Initial and optimised CRLB of realisation 0 for every (slots, SNR)."""
    geometry = ScenarioGeometry.from_layout(config.bs_pos, config.ms_pos, config.layout())
    real = realization(config, 0, geometry.n_paths)
    out = []
    for L in config.slots:
        for snr in config.snr_db:
            trace, f0, status = optimize_cell(config, geometry, real, L, snr)
            out.append({"n_slots": L, "snr_db": snr, "crlb_initial": f0,
                        "crlb_optimized": trace.final_objective if trace.records else None,
                        "iterations": trace.n_steps, "status": status})
    return out


# -- CSV ----------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.17g}"
    return str(v)


def rows_to_csv(rows):
    """CSV text with a fixed header; floats carry 17 significant digits."""
    columns = list(COLUMNS)
    if rows and "wall_ms" in rows[0]:
        columns.append("wall_ms")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c, "")) for c in columns])
    return buf.getvalue()


def read_csv(path_or_text):
    """Parse an experiment CSV back into dicts with numeric fields converted."""
    text = path_or_text
    if "\n" not in path_or_text:
        with open(path_or_text) as fh:
            text = fh.read()
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {}
        for k, v in rec.items():
            if k in ("experiment", "axis", "status") or v == "":
                row[k] = v
            elif k in ("seed", "n_elements", "n_slots", "iteration"):
                row[k] = int(v)
            else:
                row[k] = float(v)
        rows.append(row)
    return rows


# -- plot scripts ---------------------------------------------------------------

_PLOT_HEADER = '''"""Plot {csv_name} (generated by risloc)."""
import csv
from collections import defaultdict

import matplotlib.pyplot as plt

rows = list(csv.DictReader(open({csv_path!r})))
'''

_PLOT_BODIES = {
    "convergence": '''
curves = defaultdict(list)
for r in rows:
    if r["crlb"]:
        curves[(r["seed"], r["snr_db"])].append((int(r["iteration"]), float(r["crlb"])))
fig, ax = plt.subplots()
for (seed, snr), pts in sorted(curves.items()):
    it, val = zip(*sorted(pts))
    ax.semilogy(it, val, "-" if float(snr) >= 40 else ":", lw=0.8, label=f"seed {seed}, {snr} dB")
ax.set_xlabel("iteration")
ax.set_ylabel("CRLB")
''',
    "sweep": '''
curves = defaultdict(list)
for r in rows:
    if r["status"].startswith("mean") and r["crlb"]:
        curves[(int(r["n_elements"]), float(r["snr_db"]))].append((int(r["n_slots"]), float(r["crlb"])))
fig, ax = plt.subplots()
for (n, snr), pts in sorted(curves.items()):
    L, val = zip(*sorted(pts))
    ax.semilogy(L, val, marker="o", label=f"N={n}, SNR={snr:g} dB")
ax.set_xlabel("time slots L")
ax.set_ylabel("CRLB")
''',
    "position-sweep": '''
curves = defaultdict(list)
for r in rows:
    if r["status"].startswith("mean") and r["crlb"]:
        coord = float(r["ms_x"]) if r["axis"] == "x" else float(r["ms_y"])
        curves[(r["axis"], int(r["n_elements"]))].append((coord, float(r["crlb"])))
fig, axes = plt.subplots(1, 2, figsize=(10, 4))
for (axis, n), pts in sorted(curves.items()):
    c, val = zip(*sorted(pts))
    ax = axes[0 if axis == "x" else 1]
    ax.semilogy(c, val, marker="o", label=f"N={n}")
    ax.set_xlabel(f"MS {axis}-coordinate [m]")
axes[0].set_ylabel("CRLB")
ax = axes[1]
''',
}

_PLOT_FOOTER = '''ax.legend(fontsize="small")
fig.tight_layout()
fig.savefig({png_path!r}, dpi=150)
'''


def emit_plot_script(csv_path, out_path=None):
    """Write a standalone matplotlib script that plots ``csv_path``.

    The layout is chosen from the ``experiment`` column. Returns the path of
    the script (default: ``<csv_path>.plot.py``).
    """
    with open(csv_path) as fh:
        first = next(csv.DictReader(fh), None)
    if first is None:
        raise ValueError(f"{csv_path} has no data rows")
    experiment = first["experiment"]
    if experiment not in _PLOT_BODIES:
        raise ValueError(f"no plot layout for experiment {experiment!r}")
    out_path = out_path or f"{csv_path}.plot.py"
    png = f"{csv_path}.png"
    script = (_PLOT_HEADER.format(csv_name=csv_path.rsplit("/", 1)[-1], csv_path=str(csv_path))
              + _PLOT_BODIES[experiment] + _PLOT_FOOTER.format(png_path=png))
    with open(out_path, "w") as fh:
        fh.write(script)
    return out_path
