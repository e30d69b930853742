"""Command-line front end: problem configuration, batch runs, and emission of
figure/table data in documented formats.

Config files are YAML with a strict schema (unknown keys are errors) and a
`version` field.  All lengths are in k = 1 units unless a top-level
`wavelength` is given, in which case every length in the file is physical
and is multiplied by 2 pi / wavelength on load.

Field dumps are binary: magic 'VOXF', u32 version, u32 nx, ny, nz, f64 kd,
3 x f64 origin, nx*ny*nz occupancy bytes (C order), then six f64 per occupied
voxel (ReEx, ImEx, ReEy, ImEy, ReEz, ImEz) in row-major voxel order.
"""

from __future__ import annotations

import argparse
import struct
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import bounds as bd
from . import farfield as ff
from . import geometry as geo
from . import kernel as kn
from . import mie as mie_mod
from . import resonance as rs
from . import solve as sv

_FIELD_MAGIC = b"VOXF"
_FIELD_VERSION = 1

RESONANCE_CSV_HEADER = "family,index,re_lambda,im_lambda,re_chi,im_chi,residual"
AMAP_CSV_HEADER = "re_chi,im_chi,ell,amplification"


class ConfigError(ValueError):
    """Malformed or unknown configuration content (reported with its path)."""


# ---------------------------------------------------------------------------
# configuration

_SHAPE_KEYS = {
    "sphere": {"kind", "kR", "chi", "center"},
    "cylinder": {"kind", "k_rho", "kh", "chi", "center"},
    "box": {"kind", "ax", "ay", "az", "chi", "center"},
    "union": {"kind", "members"},
    "mask": {"kind", "path"},
}

_SCHEMA = {
    "version": None,
    "wavelength": None,
    "shape": None,
    "grid": {"kd", "target_voxels"},
    "incident": {"type", "direction", "polarization"},
    "solver": {"method", "tol", "max_iterations", "restart", "born_order",
               "tau_max", "dtau"},
    "outputs": {"field", "cross_sections"},
    "resonances": {"family", "kR", "ell_min", "ell_max", "window", "grid"},
    "amap": {"kR", "chi_list", "ell_max"},
}


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _check_keys(mapping: dict, allowed: set, path: str):
    for key in mapping:
        if key not in allowed:
            _fail(f"{path}.{key}", "unknown key")


def _as_complex(value, path: str) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    _fail(path, "susceptibility must be a number or a [re, im] pair")


def _shape_from_dict(d: dict, scale: float, path: str):
    if not isinstance(d, dict) or "kind" not in d:
        _fail(path, "shape section needs a 'kind'")
    kind = d["kind"]
    if kind not in _SHAPE_KEYS:
        _fail(f"{path}.kind", f"unknown shape kind {kind!r}")
    _check_keys(d, _SHAPE_KEYS[kind], path)
    center = tuple(scale * float(c) for c in d.get("center", (0, 0, 0)))
    if kind == "sphere":
        return geo.Sphere(scale * float(d["kR"]), _as_complex(d.get("chi", 0), path), center)
    if kind == "cylinder":
        return geo.Cylinder(
            scale * float(d["k_rho"]), scale * float(d["kh"]),
            _as_complex(d.get("chi", 0), path), center,
        )
    if kind == "box":
        return geo.Box(
            scale * float(d["ax"]), scale * float(d["ay"]), scale * float(d["az"]),
            _as_complex(d.get("chi", 0), path), center,
        )
    if kind == "union":
        members = d.get("members") or _fail(f"{path}.members", "union needs members")
        return geo.Union(tuple(
            _shape_from_dict(m, scale, f"{path}.members[{i}]")
            for i, m in enumerate(members)
        ))
    return ("mask", d["path"])


@dataclass
class RunConfig:
    """Validated run configuration; round-trips exactly through YAML."""

    raw: dict

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            try:
                data = yaml.safe_load(fh)
            except yaml.YAMLError as exc:
                mark = getattr(exc, "problem_mark", None)
                line = f" at line {mark.line + 1}" if mark else ""
                raise ConfigError(f"{path}{line}: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        _check_keys(data, set(_SCHEMA), "config")
        version = data.get("version")
        if version != 1:
            _fail("config.version", f"unsupported or missing version {version!r}")
        for section, allowed in _SCHEMA.items():
            if allowed is not None and section in data:
                if not isinstance(data[section], dict):
                    _fail(f"config.{section}", "must be a mapping")
                _check_keys(data[section], allowed, f"config.{section}")
        return cls(data)

    def emit(self) -> str:
        return yaml.safe_dump(self.raw, sort_keys=True)

    # -- derived objects ----------------------------------------------------
    @property
    def length_scale(self) -> float:
        wl = self.raw.get("wavelength")
        return 2.0 * np.pi / float(wl) if wl else 1.0

    def shape(self):
        if "shape" not in self.raw:
            _fail("config.shape", "missing section")
        return _shape_from_dict(self.raw["shape"], self.length_scale, "config.shape")

    def grid(self) -> geo.VoxelGrid:
        shape = self.shape()
        if isinstance(shape, tuple) and shape[0] == "mask":
            return geo.load_mask(shape[1])
        gsec = self.raw.get("grid", {})
        if "kd" in gsec:
            kd = self.length_scale * float(gsec["kd"])
        elif "target_voxels" in gsec:
            kd = (shape.analytic_volume() / float(gsec["target_voxels"])) ** (1.0 / 3.0)
        else:
            _fail("config.grid", "need kd or target_voxels")
        return geo.voxelize(shape, kd)

    def incident(self) -> sv.IncidentSpec:
        isec = self.raw.get("incident", {})
        return sv.IncidentSpec(
            kind=isec.get("type", "plane"),
            direction=tuple(isec.get("direction", (0, 0, 1))),
            polarization=tuple(isec.get("polarization", (1, 0, 0))),
        )

    def problem(self) -> sv.ScatteringProblem:
        grid = self.grid()
        ssec = self.raw.get("solver", {})
        shape = self.shape()
        chi = None
        if not isinstance(shape, tuple) and not isinstance(shape, geo.Union):
            chi = shape.chi
        return sv.ScatteringProblem(
            grid,
            chi=chi,
            incident=self.incident(),
            tol=float(ssec.get("tol", 1e-8)),
            max_iterations=int(ssec.get("max_iterations", 2000)),
            restart=int(ssec.get("restart", 60)),
        )


# ---------------------------------------------------------------------------
# field dump

def save_field(path, grid: geo.VoxelGrid, values: np.ndarray) -> None:
    nx, ny, nz = grid.dims
    with open(path, "wb") as fh:
        fh.write(_FIELD_MAGIC)
        fh.write(struct.pack("<IIIId3d", _FIELD_VERSION, nx, ny, nz, grid.kd,
                             *grid.origin))
        fh.write(grid.mask.astype(np.uint8).tobytes(order="C"))
        inter = np.empty(values.shape[0] * 6, dtype="<f8")
        inter[0::2] = values.real.ravel()
        inter[1::2] = values.imag.ravel()
        fh.write(inter.tobytes())


def load_field(path):
    with open(path, "rb") as fh:
        if fh.read(4) != _FIELD_MAGIC:
            raise ValueError("not a field dump")
        version, nx, ny, nz, kd, ox, oy, oz = struct.unpack("<IIIId3d", fh.read(48))
        if version != _FIELD_VERSION:
            raise ValueError(f"unsupported field version {version}")
        mask = (
            np.frombuffer(fh.read(nx * ny * nz), dtype=np.uint8)
            .reshape(nx, ny, nz)
            .astype(bool)
        )
        n = int(mask.sum())
        raw = np.frombuffer(fh.read(16 * 3 * n), dtype="<f8")
        values = (raw[0::2] + 1j * raw[1::2]).reshape(n, 3)
    return mask, kd, np.array([ox, oy, oz]), values


# ---------------------------------------------------------------------------
# commands

def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(args) -> int:
    cfg = RunConfig.load(args.config)
    out = _outdir(args)
    problem = cfg.problem()
    method = cfg.raw.get("solver", {}).get("method", "krylov")
    if method == "krylov":
        report = sv.krylov_solve(problem)
    elif method == "factorized":
        report = sv.factorized_solve(problem)
    elif method == "born":
        order = int(cfg.raw.get("solver", {}).get("born_order", 5))
        report = sv.born_series(problem, order, force=args.force)
    else:
        raise ConfigError(f"config.solver.method: unknown method {method!r}")
    grid = problem.grid
    E_inc = problem.incident_field()
    outputs = cfg.raw.get("outputs", {"field": True, "cross_sections": True})
    if outputs.get("field", True):
        save_field(out / "field.voxf", grid, report.field.values)
    if outputs.get("cross_sections", True):
        cs = ff.cross_sections(grid, report.field, E_inc, chi=problem.chi)
        (out / "cross_sections.csv").write_text(
            ff.CrossSectionReport.CSV_HEADER + "\n" + cs.csv_row() + "\n"
        )
        print(
            f"sigma_sc={cs.sigma_sc:.6g} sigma_abs={cs.sigma_abs:.6g} "
            f"sigma_ext={cs.sigma_ext:.6g} got_residual={cs.got_residual:.3g} "
            f"eer={cs.eer:.6g}"
        )
    print(
        f"method={report.method} iterations={report.iterations} "
        f"residual={report.residual:.3e}"
    )
    return 0


def cmd_mie(args) -> int:
    cfg = RunConfig.load(args.config)
    out = _outdir(args)
    shape = cfg.shape()
    if not isinstance(shape, geo.Sphere):
        raise ConfigError("config.shape: the Mie oracle needs a sphere")
    kr = shape.radius
    chi = shape.chi
    coeffs = mie_mod.plane_wave_coefficients(mie_mod.default_ell_max(kr))
    cs = mie_mod.mie_cross_sections(kr, chi, coeffs)
    (out / "mie_cross_sections.csv").write_text(
        ff.CrossSectionReport.CSV_HEADER + "\n" + cs.csv_row() + "\n"
    )
    print(
        f"mie: sigma_sc={cs.sigma_sc:.6g} sigma_abs={cs.sigma_abs:.6g} "
        f"sigma_ext={cs.sigma_ext:.6g} got_residual={cs.got_residual:.3g} "
        f"(projection residual {coeffs.residual:.2e})"
    )
    if args.compare:
        grid = cfg.grid()
        problem = cfg.problem()
        rep = sv.krylov_solve(problem)
        pts = grid.occupied_centers()
        inner = np.linalg.norm(pts, axis=1) < kr
        e_mie = mie_mod.mie_internal_field(kr, chi, coeffs, pts[inner])
        e_dda = rep.field.values[inner]
        rms = float(
            np.sqrt(np.mean(np.abs(e_dda - e_mie) ** 2) / np.mean(np.abs(e_mie) ** 2))
        )
        save_field(out / "dda_field.voxf", grid, rep.field.values)
        mie_vals = np.zeros_like(rep.field.values)
        mie_vals[inner] = e_mie
        save_field(out / "mie_field.voxf", grid, mie_vals)
        print(f"dda_vs_mie_rms={rms:.6g}")
    return 0


def cmd_resonances(args) -> int:
    cfg = RunConfig.load(args.config)
    out = _outdir(args)
    sec = cfg.raw.get("resonances", {})
    family = sec.get("family", "TM")
    kr = float(sec.get("kR", 0.5))
    ells = range(int(sec.get("ell_min", 1)), int(sec.get("ell_max", 20)) + 1)
    window = sec.get("window")
    rect = rs.DEFAULT_RECT if window is None else (
        (float(window[0]), float(window[1])),
        (float(window[2]), float(window[3])),
    )
    density = tuple(sec.get("grid", rs.DEFAULT_GRID))
    modes = rs.find_roots(family, ells, kr, rect=rect, grid_density=density)
    lines = [RESONANCE_CSV_HEADER]
    for m in modes:
        lines.append(
            f"{m.family},{m.index},{m.lambda_root.real:.12g},{m.lambda_root.imag:.12g},"
            f"{m.chi_root.real:.12g},{m.chi_root.imag:.12g},{m.residual:.3e}"
        )
    (out / "resonances.csv").write_text("\n".join(lines) + "\n")
    print(f"{len(modes)} roots -> {out / 'resonances.csv'}")
    print(f"cluster |lambda| < 0.05: {rs.cluster_count(modes, 0.0, 0.05)}; "
          f"|lambda + 1/2| < 0.05: {rs.cluster_count(modes, -0.5, 0.05)}")
    return 0


def cmd_amap(args) -> int:
    cfg = RunConfig.load(args.config)
    out = _outdir(args)
    sec = cfg.raw.get("amap", {})
    kr = float(sec.get("kR", 0.5))
    chis = [_as_complex(c, "config.amap.chi_list") for c in sec.get("chi_list", [-2.0])]
    ell_max = int(sec.get("ell_max", 200))
    lines = [AMAP_CSV_HEADER]
    for chi in chis:
        for ell in range(1, ell_max + 1):
            a = rs.amplification_A(ell, chi, kr)
            lines.append(f"{chi.real:.9g},{chi.imag:.9g},{ell},{a:.9g}")
    (out / "amap.csv").write_text("\n".join(lines) + "\n")
    print(f"amplification map -> {out / 'amap.csv'}")
    return 0


def cmd_bounds(args) -> int:
    cfg = RunConfig.load(args.config)
    out = _outdir(args)
    grid = cfg.grid()
    rng_pairs = 10**5 if args.quick else 10**6
    report = bd.analytic_bounds(grid, monte_carlo_pairs=rng_pairs, seed=args.seed)
    (out / "bounds.txt").write_text(report.as_text() + "\n")
    (out / "bounds.csv").write_text(
        bd.BoundReport.CSV_HEADER + "\n" + report.csv_row() + "\n"
    )
    print(report.as_text())
    shape = cfg.shape()
    chi = getattr(shape, "chi", None)
    if chi is not None:
        cert = bd.solvable_region(complex(chi), report)
        print(
            f"solvable: {cert.solvable} ({cert.criterion}"
            + (f", ||B^-1|| <= {cert.inverse_norm_bound:.4g}" if cert.inverse_norm_bound else "")
            + ")"
        )
    return 0


def cmd_selftest(args) -> int:
    """Identity suites: sum rules, Wronskians, dense-vs-FFT, an energy-balance demo."""
    from scipy.special import sici

    from . import specfun as sf

    failures = 0

    def check(name, ok):
        nonlocal failures
        print(f"[{'PASS' if ok else 'FAIL'}] {name}")
        failures += 0 if ok else 1

    xi = np.linspace(0.5, 18.0, 12)
    ok = True
    for x in xi:
        lmax = int(x) + 40
        j = sf.spherical_j_all(lmax, x)[:, 0].real
        ell = np.arange(lmax + 1)
        ok &= abs(np.sum((2 * ell + 1) * j * j) - 1.0) < 1e-12
        ok &= abs(np.sum(j * j) - sici(2 * x)[0] / (2 * x)) < 1e-12
    check("spherical sum rules", ok)

    x = np.linspace(0.2, 40.0, 40)
    ok = True
    for ell in (0, 2, 9):
        h = sf.spherical_h2(ell, x)
        hp = sf.spherical_h2(ell, x, derivative=True)
        det = h.real * hp.imag - h.imag * hp.real
        ok &= np.max(np.abs(det * x**2 + 1.0)) < 1e-11
    check("spherical Wronskian", ok)

    rng = np.random.default_rng(args.seed)
    grid = geo.grid_from_mask(np.ones((6, 6, 6), bool), 0.2, 0.3 - 0.2j)
    k = kn.get_kernel(grid)
    E = rng.normal(size=(grid.n_occupied, 3)) + 1j * rng.normal(size=(grid.n_occupied, 3))
    dense = k.dense_G()
    dd = np.max(np.abs((dense @ E.ravel()).reshape(-1, 3) - k.apply_G(E)))
    check("dense vs FFT matvec", dd < 1e-12 * np.max(np.abs(E)))
    check("transpose identity", np.array_equal(dense, dense.T))
    check("spectral round trip", k.table("dynamic").roundtrip_error() < 1e-12)

    ball = geo.voxelize(geo.Sphere(1.0, chi=0.5 - 0.5j), 1.0 / 8)
    problem = sv.ScatteringProblem(ball, chi=0.5 - 0.5j)
    rep = sv.krylov_solve(problem)
    cs = ff.cross_sections(ball, rep.field, problem.incident_field(), chi=0.5 - 0.5j)
    check("energy balance demo (residual < 2%)", cs.got_residual < 0.02)

    print("selftest:", "OK" if failures == 0 else f"{failures} failure(s)")
    return 0 if failures == 0 else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="voxborn",
        description="Volume-integral-equation light-scattering toolkit (k = 1 units).",
    )
    parser.add_argument("--threads", type=int, default=None,
                        help="FFT worker count (default: VOXBORN_THREADS or 1)")
    parser.add_argument("--seed", type=int, default=2024,
                        help="seed for Monte-Carlo and randomized estimators")
    parser.add_argument("--force", action="store_true",
                        help="run past failed convergence certificates")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kw):
        p = sub.add_parser(name, **kw)
        p.add_argument("--config", required=name not in ("selftest",),
                       help="YAML run configuration")
        p.add_argument("--out", default=".", help="output directory")
        p.set_defaults(fn=fn)
        return p

    add("solve", cmd_solve, help="solve a scattering problem and emit field + cross-sections")
    p_mie = add("mie", cmd_mie, help="Mie oracle cross-sections for spheres")
    p_mie.add_argument("--compare", action="store_true",
                       help="also solve on the grid and print the RMS deviation")
    add("resonances", cmd_resonances, help="resonance-root scan (CSV)")
    add("amap", cmd_amap, help="amplification map A_l per chi (CSV)")
    p_b = add("bounds", cmd_bounds, help="analytic bound report")
    p_b.add_argument("--quick", action="store_true", help="smaller Monte-Carlo budget")
    add("selftest", cmd_selftest, help="run the built-in identity suites")

    args = parser.parse_args(argv)
    if args.threads is not None:
        kn.set_fft_workers(args.threads)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (sv.NoConvergenceError, sv.CertificateUnavailableError,
            sv.DivergenceError, rs.IncompleteSearchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
