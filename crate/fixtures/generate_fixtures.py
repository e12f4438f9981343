#!/usr/bin/env python3
"""Regenerates the robot models, acceleration tables and target curves in this directory.

Curves are expressed in robot 2's TCP frame (the workpiece is carried by robot 2),
sampled every 0.5 mm of chord length. Run from anywhere: paths are relative to this file.
"""

import math
from pathlib import Path

import numpy as np

HERE = Path(__file__).resolve().parent
DEG = math.pi / 180.0
STEP = 0.5


def fmt(v):
    return repr(float(v))


def write_model(path, name, origins, tool_offset, q_lim_deg, qd, accel_csv, base_z=0.0):
    axes = [[0, 0, 1], [0, 1, 0], [0, 1, 0], [1, 0, 0], [0, 1, 0], [1, 0, 0]]
    # tool frame: rotate +90 deg about flange y so tool z points along flange x
    rot = [[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]]
    lines = [
        f'name = "{name}"',
        "joint_count = 6",
        "joint_axes = [" + ", ".join(f"[{a[0]:.1f}, {a[1]:.1f}, {a[2]:.1f}]" for a in axes) + "]",
        "joint_origins = [" + ", ".join(f"[{fmt(o[0])}, {fmt(o[1])}, {fmt(o[2])}]" for o in origins) + "]",
        "q_min = [" + ", ".join(fmt(lo * DEG) for lo, _ in q_lim_deg) + "]",
        "q_max = [" + ", ".join(fmt(hi * DEG) for _, hi in q_lim_deg) + "]",
        "qd_min = [" + ", ".join(fmt(-v) for v in qd) + "]",
        "qd_max = [" + ", ".join(fmt(v) for v in qd) + "]",
        f'accel_table = "{accel_csv}"',
        "",
        "[tool_transform]",
        "rotation = [" + ", ".join("[" + ", ".join(fmt(x) for x in row) + "]" for row in rot) + "]",
        f"translation = [{fmt(tool_offset)}, 0.0, 0.0]",
        "",
        "[base_transform]",
        f"translation = [0.0, 0.0, {fmt(base_z)}]",
        "",
    ]
    path.write_text("\n".join(lines))


def write_accel(path, q2_range, q3_range, major, wrist):
    """Joint 1-3 limits vary smoothly with (q2, q3); wrist limits are constant."""
    rows = ["# q2,q3,a1,a2,a3,a4,a5,a6"]
    q2s = np.arange(q2_range[0], q2_range[1] + 1e-9, 0.3)
    q3s = np.arange(q3_range[0], q3_range[1] + 1e-9, 0.3)
    for q2 in q2s:
        for q3 in q3s:
            # longer horizontal reach (small q2 + q3 magnitude) lowers the limit
            reach = 0.5 * (1.0 + math.cos(q2 + q3))
            scale = 1.0 - 0.35 * reach
            a = [major[0] * scale, major[1] * (1.0 - 0.3 * reach), major[2] * (1.0 - 0.2 * reach)] + list(wrist)
            rows.append(",".join([f"{q2:.1f}", f"{q3:.1f}"] + [f"{v:.4f}" for v in a]))
    path.write_text("\n".join(rows) + "\n")


def resample_polyline(p, n, step):
    seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
    lam = np.concatenate([[0.0], np.cumsum(seg)])
    grid = np.arange(0.0, lam[-1], step)
    grid = np.append(grid, lam[-1]) if lam[-1] - grid[-1] > 1e-9 else grid
    out_p = np.stack([np.interp(grid, lam, p[:, k]) for k in range(3)], axis=1)
    out_n = np.stack([np.interp(grid, lam, n[:, k]) for k in range(3)], axis=1)
    out_n /= np.linalg.norm(out_n, axis=1, keepdims=True)
    return out_p, out_n


def write_curve(path, p, n, header):
    rows = [f"# {header}"]
    for a, b in zip(p, n):
        rows.append(",".join(f"{v:.9f}" for v in list(a) + list(b)))
    path.write_text("\n".join(rows) + "\n")


def curve1():
    """Sinusoid with a rising spatial frequency on the parabolic surface
    z = 60 - (x^2 + y^2) / 2000, normal pointing out of the surface."""
    x = np.linspace(-250.0, 250.0, 20001)
    phase = 2 * math.pi * (x + 250.0) / 520.0 * (1.0 + 0.25 * (x + 250.0) / 500.0)
    y = 14.0 * np.sin(phase) + 4.0 * np.sin(2.1 * phase + 0.4)
    z = 60.0 - (x**2 + y**2) / 2000.0
    p = np.stack([x, y, z], axis=1)
    n = np.stack([x / 1000.0, y / 1000.0, np.ones_like(x)], axis=1)
    return resample_polyline(p, n, STEP)


def curve2():
    """Leading edge of a generic fan blade: a bowed, swept span whose surface
    normal twists about the span direction."""
    s = np.linspace(0.0, 1.0, 20001)
    x = -220.0 + 440.0 * s
    y = 25.0 * np.sin(math.pi * s) - 10.0 * s * s
    z = 60.0 + 18.0 * np.sin(math.pi * s) ** 2 - 6.0 * s
    p = np.stack([x, y, z], axis=1)
    tangent = np.gradient(p, axis=0)
    tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
    twist = (-20.0 + 45.0 * s) * DEG
    base = np.stack([np.zeros_like(s), -np.sin(twist), np.cos(twist)], axis=1)
    # keep the normal orthogonal to the edge tangent
    n = base - np.sum(base * tangent, axis=1, keepdims=True) * tangent
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    return resample_polyline(p, n, STEP)


def line():
    """Short straight relative path used by smoke tests."""
    x = np.linspace(-60.0, 60.0, 2)
    p = np.stack([x, np.zeros(2), np.full(2, 60.0)], axis=1)
    n = np.tile([0.0, 0.0, 1.0], (2, 1))
    return resample_polyline(p, n, STEP)


def main():
    robots = HERE / "robots"
    curves = HERE / "curves"
    robots.mkdir(exist_ok=True)
    curves.mkdir(exist_ok=True)

    write_model(
        robots / "abb6640.toml",
        "abb6640",
        [(0, 0, 0), (320, 0, 780), (0, 0, 1075), (0, 0, 200), (1142.5, 0, 0), (200, 0, 0)],
        450.0,
        [(-170, 170), (-65, 85), (-180, 70), (-300, 300), (-120, 120), (-360, 360)],
        [1.745, 1.571, 1.571, 3.316, 2.443, 3.316],
        "abb6640_accel.csv",
    )
    write_accel(robots / "abb6640_accel.csv", (-1.2, 1.5), (-3.3, 1.2), (9.0, 7.0, 9.0), (42.5, 36.8, 50.5))

    write_model(
        robots / "abb1200.toml",
        "abb1200",
        [(0, 0, 399.1), (0, 0, 0), (0, 0, 448), (0, 0, 42), (451, 0, 0), (82, 0, 0)],
        100.0,
        [(-170, 170), (-100, 135), (-200, 70), (-270, 270), (-130, 130), (-400, 400)],
        [5.027, 4.189, 5.184, 6.981, 7.069, 10.472],
        "abb1200_accel.csv",
        base_z=500.0,
    )
    write_accel(robots / "abb1200_accel.csv", (-1.8, 2.4), (-3.6, 1.2), (30.0, 24.0, 32.0), (108.2, 145.4, 153.5))

    p, n = curve1()
    write_curve(curves / "curve1.csv", p, n, "curve 1: multi-frequency sinusoid on a parabolic surface, robot 2 TCP frame, 0.5 mm spacing")
    p, n = curve2()
    write_curve(curves / "curve2.csv", p, n, "curve 2: fan blade leading edge, robot 2 TCP frame, 0.5 mm spacing")
    p, n = line()
    write_curve(curves / "line.csv", p, n, "straight 120 mm segment, robot 2 TCP frame, 0.5 mm spacing")


if __name__ == "__main__":
    main()
