#!/usr/bin/env python3
"""Smoke test for the entroflow_py extension module.

Build the module first:

    cargo build -p entroflow-py --release    # or a debug build

The script locates the compiled cdylib under target/, copies it into a
temporary directory under the importable name, and exercises the main
types and operations.
"""

import math
import pathlib
import shutil
import sys
import tempfile


def locate_library() -> pathlib.Path:
    root = pathlib.Path(__file__).resolve().parent.parent
    candidates = []
    for profile in ("release", "debug"):
        for stem in ("libentroflow_py.so", "libentroflow_py.dylib", "entroflow_py.dll"):
            path = root / "target" / profile / stem
            if path.exists():
                candidates.append(path)
    if not candidates:
        sys.exit(
            "entroflow_py cdylib not found; run `cargo build -p entroflow-py` first"
        )
    return max(candidates, key=lambda p: p.stat().st_mtime)


def import_module():
    lib = locate_library()
    tmp = tempfile.mkdtemp(prefix="entroflow-py-")
    suffix = ".so" if lib.suffix != ".dll" else ".pyd"
    shutil.copy2(lib, pathlib.Path(tmp) / f"entroflow_py{suffix}")
    sys.path.insert(0, tmp)
    import entroflow_py

    return entroflow_py


def approx(a: float, b: float, tol: float = 1e-12) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def main() -> None:
    ef = import_module()

    # resolvents and potentials
    assert ef.prox("indicator", 0.5, 2.0) == 1.0
    assert ef.prox("regular", 1.0, 0.0) == 0.0
    assert approx(ef.prox("regular", 1.0, 2.0), 1.0, 1e-12)
    assert abs(ef.prox("logarithmic", 0.5, 0.3)) < 1.0
    assert ef.yosida("indicator", 0.5, 2.0) == 2.0
    assert approx(ef.moreau("indicator", 0.5, 2.0), 1.0)
    assert ef.betahat("indicator", 2.0) == math.inf
    assert approx(ef.betahat("logarithmic", 1.0), 2.0 * math.log(2.0))

    # regularized logarithm family
    r = math.e + 1.0
    rho = ef.rho(1.0, r)
    assert approx(rho, math.e, 1e-12)
    assert approx(rho + math.log(rho), r, 1e-12)
    assert ef.ln_reg(0.2, 1.0) == 0.2
    assert ef.ln_reg_prime(0.2, -3.0) >= 0.2

    # truncated latent heat: lambda(r) = r - r^2, eps = 0.5
    assert ef.lambda_trunc(1.0, -1.0, 0.5, 1.0) == 0.0
    assert ef.lambda_trunc(1.0, -1.0, 0.5, 4.0) == -8.0
    assert ef.lambda_trunc_prime(1.0, -1.0, 0.3, 0.0) == 1.0

    # step guard at pinned parameters: min{1, 0.05, 0.01/882, 0.125}
    params = ef.PhysParams(1.0, 1.0, 1.0, 0.1, 0.1, "regular", 1.0, -1.0, 0.25, 0.5)
    assert approx(params.step_guard(), 0.01 / 882.0)
    assert params.lambda_prime_sup() == 21.0
    q = params.contraction_factor(0.5 * params.step_guard())
    assert approx(q, 0.5)

    # mesh and Green operators
    mesh = ef.Mesh(8, 1.0, 1.0, 1.0)
    assert mesh.n_nodes() == 9
    assert approx(sum(mesh.lumped_mass()), 1.0)
    const = [2.5] * 9
    for value in mesh.neumann_green(const):
        assert approx(value, 2.5)
    ones = [1.0] * 9
    assert approx(mesh.dual_norm_v(ones), 1.0)

    # a stationary run conserves everything and reports tiny residuals
    result = ef.run_config(ef.preset_config("stationary_logarithmic"))
    assert result.ok and result.failure is None
    assert len(result.times) == 51
    drift = max(abs(c - result.conserved[0]) for c in result.conserved)
    assert drift <= 1e-12, drift
    assert result.max_scheme_residual <= 1e-10
    assert result.min_theta >= 0.25 * (1.0 - 1e-6)
    assert all(abs(p) <= 1e-10 for p in result.phi_final)

    print("smoke test passed")


if __name__ == "__main__":
    main()
