"""Grid-independent right-hand sides.

A source is a recipe ``grid -> GridFunction`` so refinement studies sample
the same continuum object (or the same singular family) on every grid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .lattice import GridFunction, TorusGrid, bandlimited

__all__ = ["Source", "Zero", "Bandlimited", "Spike", "Mode", "Sum", "source_from_dict"]


class Source:
    def __call__(self, grid: TorusGrid) -> GridFunction:
        raise NotImplementedError

    def __add__(self, other: "Source") -> "Source":
        return Sum((self, other))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(Source):
    def __call__(self, grid):
        return grid.zeros()

    def to_dict(self):
        return {"kind": "zero"}


@dataclass(frozen=True)
class Bandlimited(Source):
    """Random trigonometric polynomial, identical on every grid."""

    seed: int
    kmax: int = 4
    decay: float = 2.0
    real: bool = True
    scale: float = 1.0
    mean_zero: bool = False

    def __call__(self, grid):
        rng = np.random.default_rng(self.seed)
        u = bandlimited(grid, rng, kmax=self.kmax, decay=self.decay, real=self.real, mean_zero=self.mean_zero)
        return u * self.scale

    def to_dict(self):
        return {"kind": "bandlimited", "seed": self.seed, "kmax": self.kmax, "decay": self.decay,
                "real": self.real, "scale": self.scale, "mean_zero": self.mean_zero}


@dataclass(frozen=True)
class Mode(Source):
    """``amplitude * exp(2 pi i k.x / L)``."""

    wavevector: tuple
    amplitude: complex = 1.0

    def __call__(self, grid):
        k = np.asarray(self.wavevector, dtype=float).reshape(grid.dim)
        x = grid.coordinates()
        vals = self.amplitude * np.exp(2j * np.pi * (x @ k) / grid.period)
        return GridFunction(grid, vals.reshape(grid.shape))

    def to_dict(self):
        return {"kind": "mode", "wavevector": list(self.wavevector),
                "amplitude": [complex(self.amplitude).real, complex(self.amplitude).imag]}


@dataclass(frozen=True)
class Spike(Source):
    """Lattice point mass of total mass ``weight`` at a physical location.

    Its ``L^2`` norm grows like ``h^(-n/2)``: the rough, non-integrable-in-the
    -limit part of a right-hand side.
    """

    position: tuple
    weight: float = 1.0

    def __call__(self, grid):
        pos = np.asarray(self.position, dtype=float).reshape(grid.dim)
        idx = tuple(int(round(c / grid.spacing)) % grid.points for c in pos)
        vals = np.zeros(grid.shape, dtype=complex)
        vals[idx] = self.weight / grid.cell_volume
        return GridFunction(grid, vals)

    def to_dict(self):
        return {"kind": "spike", "position": list(self.position), "weight": self.weight}


@dataclass(frozen=True)
class Sum(Source):
    parts: tuple

    def __call__(self, grid):
        out = grid.zeros()
        for p in self.parts:
            out = out + p(grid)
        return out

    def to_dict(self):
        return {"kind": "sum", "parts": [p.to_dict() for p in self.parts]}


def source_from_dict(d: dict) -> Source:
    kind = d.get("kind")
    try:
        if kind == "zero":
            return Zero()
        if kind == "bandlimited":
            return Bandlimited(int(d["seed"]), int(d.get("kmax", 4)), float(d.get("decay", 2.0)),
                               bool(d.get("real", True)), float(d.get("scale", 1.0)),
                               bool(d.get("mean_zero", False)))
        if kind == "mode":
            amp = d.get("amplitude", 1.0)
            amp = complex(*amp) if isinstance(amp, (list, tuple)) else complex(amp)
            return Mode(tuple(int(k) for k in d["wavevector"]), amp)
        if kind == "spike":
            return Spike(tuple(float(c) for c in d["position"]), float(d.get("weight", 1.0)))
        if kind == "sum":
            return Sum(tuple(source_from_dict(p) for p in d["parts"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"source {kind!r}: {exc}") from exc
    raise ConfigurationError(f"unknown source kind {kind!r}")
