"""PH splines: chains of PH segments over the global parameter [0, m]."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bernstein import de_casteljau
from .errors import DomainError
from .kernels import gauss_legendre
from .ph import FrameSample, PHSegment, QuaternionPolynomial


def _endpoint_derivatives(tuples, at_end: bool, order: int = 3):
    """Derivatives 0..order of a Bernstein quaternion polynomial at 0 or 1."""
    out = []
    c = np.asarray(tuples, float)
    for _ in range(order + 1):
        out.append(c[-1] if at_end else c[0])
        deg = c.shape[0] - 1
        c = deg * np.diff(c, axis=0) if deg > 0 else np.zeros_like(c[:1])
    return np.array(out)


@dataclass(frozen=True, eq=False)
class PHSpline:
    """Segments ``1..m`` of a common degree; segment ``k`` covers ``xi in [k-1, k]``."""

    segments: tuple

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("a spline needs at least one segment")
        if len({s.n for s in segs}) != 1:
            raise ValueError("all segments must share the quaternion degree")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def from_tuples(cls, tuples, start) -> PHSpline:
        """Chain segments from stacked tuples ``(m, n+1, 4)`` starting at ``start``."""
        segs = []
        origin = np.asarray(start, float)
        for t in np.asarray(tuples, float):
            seg = PHSegment(QuaternionPolynomial(t), origin)
            segs.append(seg)
            origin = seg.end
        return cls(tuple(segs))

    @property
    def m(self) -> int:
        return len(self.segments)

    @property
    def n(self) -> int:
        return self.segments[0].n

    @property
    def tuples(self) -> np.ndarray:
        return np.stack([s.z.tuples for s in self.segments])

    @property
    def start(self) -> np.ndarray:
        return self.segments[0].origin

    @property
    def end(self) -> np.ndarray:
        return self.segments[-1].end

    def locate(self, xi: float):
        """0-based segment index and local parameter for global ``xi``."""
        if not (0.0 <= xi <= self.m) or not math.isfinite(xi):
            raise DomainError(f"xi must lie in [0, {self.m}], got {xi!r}")
        k = min(int(math.floor(xi)), self.m - 1)
        return k, xi - k

    def position(self, xi: float) -> np.ndarray:
        k, s = self.locate(xi)
        return self.segments[k].position(s)

    def frame(self, xi: float) -> FrameSample:
        k, s = self.locate(xi)
        return self.segments[k].frame(s)

    def control_points(self) -> list[np.ndarray]:
        return [np.array(s.control_points) for s in self.segments]

    def sample(self, per_segment: int = 100) -> np.ndarray:
        """Curve points at ``per_segment`` uniform local parameters in each segment."""
        s = np.linspace(0.0, 1.0, per_segment)
        return np.concatenate([seg.position(s) for seg in self.segments])

    # -- continuity diagnostics ---------------------------------------------

    def position_jumps(self) -> np.ndarray:
        return np.array(
            [
                np.linalg.norm(self.segments[k].end - self.segments[k + 1].origin)
                for k in range(self.m - 1)
            ]
        )

    def quaternion_jumps(self, order: int = 3) -> np.ndarray:
        """Per join, largest mismatch of ``Z, Z', ..., Z^(order)`` evaluated from both sides."""
        out = []
        for k in range(self.m - 1):
            left = _endpoint_derivatives(self.segments[k].z.tuples, True, order)
            right = _endpoint_derivatives(self.segments[k + 1].z.tuples, False, order)
            out.append(float(np.max(np.abs(left - right))))
        return np.array(out)

    def jet_jumps(self) -> dict:
        """Per join, mismatch of sigma, R, chi and their first two derivatives."""
        out = {"sigma": [], "rotation": [], "chi": []}
        for k in range(self.m - 1):
            a = self.segments[k].jet(1.0)
            b = self.segments[k + 1].jet(0.0)
            for key in out:
                out[key].append(
                    max(float(np.max(np.abs(np.asarray(x) - np.asarray(y))))
                        for x, y in zip(a[key], b[key]))
                )
        return {key: np.array(v) for key, v in out.items()}

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "segments": [
                {"tuples": s.z.tuples.tolist(), "origin": s.origin.tolist()}
                for s in self.segments
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> PHSpline:
        segs = tuple(
            PHSegment(QuaternionPolynomial(s["tuples"]), s["origin"]) for s in doc["segments"]
        )
        spline = cls(segs)
        if doc.get("m", spline.m) != spline.m or doc.get("n", spline.n) != spline.n:
            raise ValueError("spline header disagrees with its segment list")
        return spline


def save_spline(spline: PHSpline, path, extra: dict | None = None) -> None:
    doc = spline.to_dict()
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_spline(path) -> PHSpline:
    return PHSpline.from_dict(json.loads(Path(path).read_text()))


def spline_functionals(spline: PHSpline, npts: int = 64):
    """Arc length ``L``, energy ``E = int |chi|^2`` and twist ``E_twist = int chi1^2``.

    ``L`` is exact; the two energies use ``npts``-point Gauss-Legendre per
    segment over the local parameter.
    """
    nodes, weights = gauss_legendre(npts)
    length = sum(seg.sigma.integral() for seg in spline.segments)
    energy = 0.0
    twist = 0.0
    for seg in spline.segments:
        sig = de_casteljau(seg.sigma.coeffs, nodes)
        chi = de_casteljau(seg._chi_num, nodes) / sig[:, None]
        energy += float(weights @ np.sum(chi * chi, axis=1))
        twist += float(weights @ (chi[:, 0] ** 2))
    return length, energy, twist
