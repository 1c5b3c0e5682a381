# SPDX-License-Identifier: Apache-2.0
"""Smoke test for the simdram extension.

Build first:  cargo build --release -p simdram-py --features extension-module
Then:         python3 python/smoke_test.py
"""
import importlib.util
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    try:
        import simdram  # installed or already on the path
        return simdram
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libsimdram.so"
        if lib.exists():
            # the loader wants the module name as the file stem
            dst = pathlib.Path(tempfile.mkdtemp()) / "simdram.so"
            shutil.copy(lib, dst)
            spec = importlib.util.spec_from_file_location("simdram", dst)
            mod = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(mod)
            return mod
    sys.exit("libsimdram.so not built")


def main():
    sd = load()
    ops = sd.list_operations()
    assert len(ops) == 16 and "addition" in ops

    fa = sd.Mig.full_adder()
    opt = fa.optimize()
    assert opt.maj_count() == 3 and opt.equivalent(fa)
    for v in range(8):
        bits = {n: bool(v >> i & 1) for i, n in enumerate(fa.input_names())}
        s = bin(v).count("1")
        assert opt.eval(bits) == [s % 2 == 1, s >= 2]
    assert "DCC0" in sd.Mig.curated("addition").allocate()

    p = sd.build_program("addition", 8)
    assert p.counts()["total"] == 65 and len(p) == 65
    p.check()
    assert sd.MicroProgram.decode(p.encode()).encode() == p.encode()

    assert sd.run("addition", 4, [[1, 7], [2, 9]]) == [3, 0]
    assert sd.run("multiplication", 4, [[3], [5]], mode="generated") == [15]
    assert sd.oracle("greater", 4, [15, 1]) == 0
    assert sd.oracle("greater", 4, [15, 1], unsigned=True) == 1
    try:
        sd.run("division", 4, [[7, 9], [2, 0]], strict_division=True)
        raise AssertionError("expected a division error")
    except ValueError as e:
        assert "lane 1" in str(e)
    try:
        sd.build_program("nope", 4)
        raise AssertionError("expected an unknown-op error")
    except ValueError:
        pass

    r = sd.verify("equal", 4, mode="generated")
    assert r["mismatches"] == 0 and r["lane_independent"]
    assert sd.classify_scaling([(n, 8 * n + 1) for n in (4, 8, 16, 32)]) == "Linear"
    print("python smoke test: ok")


if __name__ == "__main__":
    main()
