"""Experiment configuration: an INI-style file with sections.

[experiment]   name, alpha, d, t_fin, replicas, seed, n_snap, threads, out
[sweep]        N = 64, 128, 256  and either  chi = 1e-4, ...  (one value, or one per N)
               or  chi_rule = c  meaning chi = c * N^(-2/min(1, alpha/2))
[initial]      profile = constant | cosine | table, base, amplitude, k, table,
               start = equilibrium | deterministic, truncation (M = truncation * max u0)
[tilt]         kind = none | constant | cosine, eps, k
[reference]    rho, pde_cells, pde_records
[rate]         K_max, time_nodes
[martingale]   modes = cos1, sin1, cos2, ...
[equilibrium]  chis, lam, a, b, rhos, alphas, cgf_N, cgf_chi, psi_amplitude
"""
from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..lattice import ScalingParams, TorusLattice, cell_average
from ..sim import TiltField

SEED_ENV = "ZRP_PME_SEED"


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(float(x)) for x in _floats(text)]


@dataclass
class ExperimentConfig:
    name: str
    alpha: float = 2.0
    d: int = 1
    t_fin: float = 0.05
    replicas: int = 64
    seed: int = 0
    n_snap: int = 64
    threads: int = 1
    out: str = "results"
    Ns: list[int] = field(default_factory=lambda: [64, 128, 256])
    chis: list[float] | None = None
    chi_rule: float | None = 1.0
    profile: str = "cosine"
    base: float = 1.0
    amplitude: float = 0.5
    k: int = 1
    table: list[float] | None = None
    start: str = "equilibrium"
    truncation: float | None = None
    tilt: str = "none"
    eps: float = 0.0
    tilt_k: int = 1
    rho: float = 1.0
    pde_cells: int | None = None
    pde_records: int = 256
    K_max: int = 8
    time_nodes: int = 64
    modes: list[str] = field(default_factory=lambda: ["cos1", "sin1", "cos2", "sin2", "cos3"])
    extra: dict = field(default_factory=dict)
    text: str = ""

    def __post_init__(self):
        if self.profile not in ("constant", "cosine", "table"):
            raise ValueError(f"unknown profile {self.profile!r}")
        if self.start not in ("equilibrium", "deterministic"):
            raise ValueError(f"unknown start {self.start!r}")
        if self.tilt not in ("none", "constant", "cosine"):
            raise ValueError(f"unknown tilt {self.tilt!r}")
        if self.chis is not None and len(self.chis) not in (1, len(self.Ns)):
            raise ValueError("give one chi or one per N")
        if self.chis is None and self.chi_rule is None:
            raise ValueError("sweep needs chi or chi_rule")
        if self.profile == "table" and not self.table:
            raise ValueError("table profile needs values")
        if self.profile == "cosine" and abs(self.amplitude) >= self.base:
            raise ValueError("cosine profile must stay positive")
        if not self.text:
            self.text = self.to_text()

    def chi_for(self, i: int, N: int) -> float:
        if self.chis is not None:
            return self.chis[0] if len(self.chis) == 1 else self.chis[i]
        return self.chi_rule * N ** (-2.0 / min(1.0, self.alpha / 2))

    def sweep(self) -> list[ScalingParams]:
        """ScalingParams per entry; the rule form keeps N^2 chi^min(1, a/2) fixed."""
        return [ScalingParams(self.d, N, self.chi_for(i, N), self.alpha, self.t_fin)
                for i, N in enumerate(self.Ns)]

    def profile_fn(self):
        """u0 as a callable on points of shape (..., d)."""
        if self.profile == "constant":
            return lambda z: np.full(z.shape[:-1], self.base)
        if self.profile == "cosine":
            return lambda z: self.base + self.amplitude * np.cos(2 * np.pi * self.k * z[..., 0])
        tab = np.asarray(self.table, dtype=float)
        n = tab.size

        def f(z):
            idx = np.floor(np.mod(z[..., 0], 1.0) * n).astype(int) % n
            return tab[idx]

        return f

    def profile_sites(self, lattice: TorusLattice) -> np.ndarray:
        if self.profile == "constant":
            return np.full(lattice.site_count, float(self.base))
        return cell_average(self.profile_fn(), lattice)

    def tilt_field(self) -> TiltField | None:
        if self.tilt == "none":
            return None
        if self.tilt == "constant":
            return TiltField.constant(self.eps)
        return TiltField.cosine(self.eps, self.tilt_k)

    def to_text(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp["experiment"] = {k: str(getattr(self, k)) for k in
                            ("name", "alpha", "d", "t_fin", "replicas", "seed", "n_snap", "threads", "out")}
        sw = {"N": ", ".join(map(str, self.Ns))}
        if self.chis is not None:
            sw["chi"] = ", ".join(repr(c) for c in self.chis)
        else:
            sw["chi_rule"] = repr(self.chi_rule)
        cp["sweep"] = sw
        ini = {"profile": self.profile, "base": repr(self.base), "amplitude": repr(self.amplitude),
               "k": str(self.k), "start": self.start}
        if self.truncation is not None:
            ini["truncation"] = repr(self.truncation)
        if self.table:
            ini["table"] = ", ".join(repr(v) for v in self.table)
        cp["initial"] = ini
        cp["tilt"] = {"kind": self.tilt, "eps": repr(self.eps), "k": str(self.tilt_k)}
        ref = {"rho": repr(self.rho), "pde_records": str(self.pde_records)}
        if self.pde_cells is not None:
            ref["pde_cells"] = str(self.pde_cells)
        cp["reference"] = ref
        cp["rate"] = {"K_max": str(self.K_max), "time_nodes": str(self.time_nodes)}
        cp["martingale"] = {"modes": ", ".join(self.modes)}
        for sec, kv in self.extra.items():
            cp[sec] = {k: str(v) for k, v in kv.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_string(text)
    if not cp.has_section("experiment"):
        raise ValueError("config needs an [experiment] section")
    ex = cp["experiment"]
    kw: dict = {"name": ex.get("name", "experiment")}
    for key, conv in (("alpha", float), ("d", int), ("t_fin", float), ("replicas", int),
                      ("seed", int), ("n_snap", int), ("threads", int), ("out", str)):
        if key in ex:
            kw[key] = conv(ex[key])
    if cp.has_section("sweep"):
        sw = cp["sweep"]
        if "N" in sw:
            kw["Ns"] = _ints(sw["N"])
        if "chi" in sw:
            kw["chis"] = _floats(sw["chi"])
            kw["chi_rule"] = None
        elif "chi_rule" in sw:
            kw["chi_rule"] = float(sw["chi_rule"])
    if cp.has_section("initial"):
        s = cp["initial"]
        kw["profile"] = s.get("profile", "cosine")
        for key, conv in (("base", float), ("amplitude", float), ("k", int), ("start", str),
                          ("truncation", float)):
            if key in s:
                kw[key] = conv(s[key])
        if "table" in s:
            kw["table"] = _floats(s["table"])
    if cp.has_section("tilt"):
        s = cp["tilt"]
        kw["tilt"] = s.get("kind", "none")
        if "eps" in s:
            kw["eps"] = float(s["eps"])
        if "k" in s:
            kw["tilt_k"] = int(s["k"])
    if cp.has_section("reference"):
        s = cp["reference"]
        if "rho" in s:
            kw["rho"] = float(s["rho"])
        if "pde_cells" in s:
            kw["pde_cells"] = int(s["pde_cells"])
        if "pde_records" in s:
            kw["pde_records"] = int(s["pde_records"])
    if cp.has_section("rate"):
        s = cp["rate"]
        if "K_max" in s:
            kw["K_max"] = int(s["K_max"])
        if "time_nodes" in s:
            kw["time_nodes"] = int(s["time_nodes"])
    if cp.has_section("martingale") and "modes" in cp["martingale"]:
        kw["modes"] = [m.strip() for m in cp["martingale"]["modes"].split(",") if m.strip()]
    known = {"experiment", "sweep", "initial", "tilt", "reference", "rate", "martingale"}
    kw["extra"] = {sec: dict(cp[sec]) for sec in cp.sections() if sec not in known}
    kw["text"] = text
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def resolve_seed(config: ExperimentConfig, cli_seed: int | None = None) -> int:
    """Command line first, then the environment variable, then the config file."""
    if cli_seed is not None:
        return int(cli_seed)
    env = os.environ.get(SEED_ENV)
    if env:
        return int(env)
    return int(config.seed)
