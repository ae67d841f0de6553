"""Smoke test for the csrecon Python bindings.

Build first:
    cargo build -p csrecon-py --release --features extension-module
then run:
    python3 python/smoke.py [path/to/libcsrecon_py.so]
"""

import importlib.machinery
import importlib.util
import math
import pathlib
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load(path=None):
    candidates = [pathlib.Path(path)] if path else [
        ROOT / "target" / "release" / "libcsrecon_py.so",
        ROOT / "target" / "debug" / "libcsrecon_py.so",
    ]
    for lib in candidates:
        if lib.exists():
            loader = importlib.machinery.ExtensionFileLoader("csrecon_py", str(lib))
            spec = importlib.util.spec_from_file_location("csrecon_py", str(lib), loader=loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            return module
    sys.exit(f"extension not found in {[str(c) for c in candidates]}; build it first")


def main():
    cs = load(sys.argv[1] if len(sys.argv) > 1 else None)
    print("csrecon_py", cs.__version__)

    data = cs.Dataset.synthesize(seed=1, ns=2, nc=2, ny=32, nz=32)
    assert data.shape == [2, 2, 32, 32], data.shape
    ref, shape = data.reference()
    assert shape == [2, 32, 32] and max(ref) > 0

    mask = cs.Mask.poisson(32, 32, 4.0, center_radius=3, seed=2)
    assert abs(mask.acceleration / 4.0 - 1.0) <= 0.02, mask.acceleration
    assert sum(mask.grid()) == round(32 * 32 * mask.fraction)

    model = cs.Model("IK", "mc", nc=2, base_width=4, seed=0)
    assert model.param_count > 0
    model.zero()
    recon, _ = model.reconstruct(data, mask)
    zf, _ = data.zero_filled(mask)
    # a zero-weight cascade reproduces the zero-filled image
    assert max(abs(a - b) for a, b in zip(recon, zf)) <= 1e-5 * max(zf)

    full, _ = model.reconstruct(data, cs.Mask.full(32, 32))
    plane = 32 * 32
    assert cs.nrmse(full[:plane], ref[:plane]) < 1e-5
    assert math.isinf(cs.psnr(ref[:plane], ref[:plane]))
    assert abs(cs.vif(ref[:plane], ref[:plane], 32, 32) - 1.0) < 1e-6
    assert cs.friedman([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]) == (0.0, 1.0)

    with tempfile.TemporaryDirectory() as out:
        config = "[data]\nvolumes = 3\nslices_per_volume = 1\nnc = 2\nny = 32\nnz = 32\n"
        outputs = cs.run("synth", config, out, deterministic=True)
        assert len(outputs) == 4, outputs
        loaded = cs.Dataset.load(str(pathlib.Path(out) / outputs[0]))
        assert loaded.shape == [1, 2, 32, 32]
        try:
            cs.run("synth", "[data]\nbogus = 1\n", out)
        except ValueError as e:
            assert "bogus" in str(e)
        else:
            raise AssertionError("bad config accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
