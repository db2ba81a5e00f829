"""Compute and freeze oracle values for the test suite.

Fixed points come from enumerating permutation matrices and coordinate
projectors; critical values are traces evaluated directly; Hessian spectra
come from finite differences in a retraction chart.  Writes
tests/golden/oracles.json.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

import oracles  # noqa: E402
from morse_lab.manifold import isospectral, projective_space, sphere, to_matrix, to_vector  # noqa: E402


def table(m, points, value):
    rows = []
    for x in points:
        spec = oracles.chart_hessian(m.constraint, m.retraction, value, x)
        rows.append({"location": np.round(x, 12).tolist(), "value": round(float(value(x)), 10),
                     "index": int(np.sum(spec < 0)), "spectrum": np.round(spec, 6).tolist()})
    rows.sort(key=lambda r: (r["value"], r["location"]))
    return rows


def main() -> None:
    out = {}
    S = sphere(2)
    poles = [np.array([0.0, 0.0, -1.0]), np.array([0.0, 0.0, 1.0])]
    out["sphere-height"] = {"fixed": [p.tolist() for p in poles],
                            "critical": table(S, poles, lambda x: x[2])}

    D3 = np.diag([0.0, 1.0, 2.0])
    cp = projective_space(3)
    projs = [to_vector(P.astype(complex)) for P in oracles.coordinate_projectors(3)]
    out["cp2-torus"] = {"fixed": [p.tolist() for p in projs],
                        "critical": table(cp, projs,
                                          lambda x: np.trace(D3 @ to_matrix(x, 3)).real)}

    D2 = np.diag([0.0, 1.0])
    f2 = isospectral([-1.0, 1.0])
    pts = [to_vector(P.astype(complex)) for P in oracles.permutation_diagonals([-1.0, 1.0])]
    out["flag-su2"] = {"fixed": [p.tolist() for p in pts],
                       "critical": table(f2, pts,
                                         lambda x: np.trace(D2 @ to_matrix(x, 2)).real)}

    f3 = isospectral([0.0, 1.0, 2.0])
    pts = [to_vector(P.astype(complex)) for P in oracles.permutation_diagonals([0.0, 1.0, 2.0])]
    out["flag-su3"] = {"fixed": [p.tolist() for p in pts],
                       "critical": table(f3, pts,
                                         lambda x: np.trace(D3 @ to_matrix(x, 3)).real)}

    rng = np.random.default_rng(7)
    noise = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    A = 0.98 * np.diag([1.0, 0.0, 0.0]) + 0.01 * (noise + noise.conj().T)
    P = oracles.nearest_projector_bruteforce(A)
    out["cp2-retraction"] = {"input": to_vector(A).tolist(),
                             "nearest": np.round(to_vector(P), 10).tolist()}

    path = ROOT / "tests" / "golden" / "oracles.json"
    path.write_text(json.dumps(out, indent=1, sort_keys=True) + "\n")
    for k, v in out.items():
        if "critical" in v:
            print(k, [(r["value"], r["index"]) for r in v["critical"]])
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
