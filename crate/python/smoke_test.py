#!/usr/bin/env python3
"""Smoke test for the rvcsim Python module.

Builds the extension with cargo, imports it, and checks the bindings
end to end: generate -> run on both engines -> diff, plus stats layout
and the disassembler.  Exits nonzero on the first failure.

Usage: python3 python/smoke_test.py
"""

import shutil
import subprocess
import sys
import sysconfig
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def build_module(workdir: Path) -> Path:
    subprocess.run(
        ["cargo", "build", "-p", "rvcsim-py", "--release"],
        cwd=REPO,
        check=True,
    )
    built = REPO / "target" / "release" / "librvcsim.so"
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    target = workdir / f"rvcsim{suffix}"
    shutil.copy2(built, target)
    return target


def main() -> int:
    workdir = Path(tempfile.mkdtemp(prefix="rvcsim-py-"))
    build_module(workdir)
    sys.path.insert(0, str(workdir))
    import rvcsim

    # Generated image round-trips through bytes and is deterministic.
    image, manifest = rvcsim.generate("rand", seed=7, size=2048)
    image2, manifest2 = rvcsim.generate("rand", seed=7, size=2048)
    assert image == image2 and manifest == manifest2, "generator must be deterministic"
    assert '"kind": "rand"' in manifest

    # The pipeline and the reference model commit identical logs.
    pipe = rvcsim.run(image, log=True)
    ref = rvcsim.run(image, engine="ref", log=True)
    assert pipe.success and ref.success, (pipe.status, ref.status)
    assert pipe.exit_code == 0
    assert pipe.log == ref.log
    assert rvcsim.diff(pipe.log, ref.log) is None
    assert pipe.instructions == ref.instructions
    assert 0.0 < pipe.ipc <= 1.0
    assert pipe.fetch_misses == 0, "dual-ported fetch never misses"

    # A corrupted log is pinpointed by line and field.
    lines = pipe.log.splitlines()
    i = lines[1].index("X05=") + 4
    flipped = "0" if lines[1][i] == "f" else "f"
    lines[1] = lines[1][:i] + flipped + lines[1][i + 1 :]
    divergence = rvcsim.diff(pipe.log, "\n".join(lines) + "\n")
    assert divergence is not None and "line 2" in divergence and "X05" in divergence

    # Stats rows follow the documented CSV layout.
    header_fields = rvcsim.STATS_CSV_HEADER.split(", ")
    assert len(header_fields) == 10
    row = pipe.csv()
    assert row.startswith("dualpc+gshare, ")
    assert len(row.split(", ")) == len(header_fields)

    # Paths work like bytes, and configuration knobs reach the core.
    prog = workdir / "prog.bin"
    prog.write_bytes(image)
    naive = rvcsim.run(prog, fetch="naive", bpred="none", sp_init=True)
    assert naive.success
    assert naive.hit_rate is None, "no predictor => no hit rate"
    assert naive.cycles >= pipe.cycles, "naive fetch cannot beat dual-PC"
    assert naive.instructions == pipe.instructions

    # Console bytes surface in order.
    putchar = rvcsim.run(image, engine="ref")
    assert putchar.console == ref.console == pipe.console

    # Bad arguments raise ValueError, not a crash.
    for bad in (
        lambda: rvcsim.run(image, fetch="warp"),
        lambda: rvcsim.generate("nonsense"),
        lambda: rvcsim.run(image, imem_kb=48),
    ):
        try:
            bad()
        except (ValueError, RuntimeError):
            pass
        else:
            raise AssertionError("expected an exception")

    # Disassembler handles both widths (compressed forms print their
    # expansion behind a "c." marker).
    assert rvcsim.disasm(0x00100093) == "addi x1, x0, 1"
    assert rvcsim.disasm(0x4085) == "c.addi x1, x0, 1"

    print("smoke test OK:", pipe)
    return 0


if __name__ == "__main__":
    sys.exit(main())
