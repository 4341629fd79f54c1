"""Builds the extension module, imports it and exercises each binding."""
import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def build():
    subprocess.run(["cargo", "build", "--release", "-p", "linefield-py"], cwd=ROOT, check=True)
    lib = ROOT / "target" / "release" / "liblinefield_py.so"
    dest = Path(tempfile.mkdtemp()) / "linefield_py.so"
    shutil.copy(lib, dest)
    sys.path.insert(0, str(dest.parent))


def main():
    build()
    import linefield_py as lf

    w, h = 128, 96
    gt = [(20.3, 30.7, 100.2, 70.1)]
    df, af = lf.render_fields(gt, w, h, 5.0)
    assert len(df) == len(af) == w * h
    assert min(df) < 1.0

    found = lf.detect_fields(df, af, w, h)
    assert len(found) == 1, found
    print("detected", found[0])

    refined = lf.refine(found, df, af, w, h)
    assert lf.repeatability(refined, gt) == 1.0
    print("localization error", lf.localization_error(refined, gt, kind="orthogonal"))

    vp = (500.0, 300.0)
    pencil = []
    for i in range(8):
        a = 2.2 + 0.12 * i
        pencil.append((vp[0] + 150 * math.cos(a), vp[1] + 150 * math.sin(a), vp[0] + 260 * math.cos(a), vp[1] + 260 * math.sin(a)))
    vps, assignment = lf.fit_vps(pencil)
    x, y, z = vps[0]
    assert abs(x / z - vp[0]) < 1e-6 and abs(y / z - vp[1]) < 1e-6
    assert assignment == [0] * 8

    img = [180.0 if 20 <= i % w < 100 and 20 <= i // w < 70 else 40.0 for i in range(w * h)]
    lines = lf.detect_image(img, w, h)
    assert len(lines) >= 4, lines
    pdf, paf = lf.generate_pseudo_gt(img, w, h, num_homographies=4, seed=1)
    assert len(pdf) == w * h

    try:
        lf.render_fields([(1.0, 1.0, 1.0, 1.0)], 8, 8)
    except ValueError as e:
        print("rejected degenerate segment:", e)
    else:
        raise AssertionError("degenerate segment accepted")
    print("ok")


if __name__ == "__main__":
    main()
