"""Plain PPM/PGM rendering for velocity maps and waveform panels."""

import numpy as np

# blue -> cyan -> green -> yellow -> red, interpolated per channel
_STOPS = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
_REDS = np.array([20, 0, 30, 240, 200], dtype=np.float64)
_GREENS = np.array([30, 170, 180, 220, 30], dtype=np.float64)
_BLUES = np.array([140, 220, 60, 40, 30], dtype=np.float64)


def write_ppm(path, rgb):
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(rgb.tobytes())


def write_pgm(path, gray):
    gray = np.ascontiguousarray(gray, dtype=np.uint8)
    h, w = gray.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(gray.tobytes())


def velocity_pixels(vmap):
    """Map a 2-d velocity field to RGB through the velocity ramp."""
    v = np.asarray(vmap, dtype=np.float64)
    if v.ndim == 3:
        v = v[0]
    if v.ndim != 2:
        raise ValueError(f"velocity image must be 2-d, got shape {v.shape}")
    lo, hi = float(v.min()), float(v.max())
    u = np.full_like(v, 0.5) if hi == lo else (v - lo) / (hi - lo)
    rgb = np.stack([np.interp(u, _STOPS, _REDS),
                    np.interp(u, _STOPS, _GREENS),
                    np.interp(u, _STOPS, _BLUES)], axis=-1)
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def waveform_pixels(panel):
    """Grayscale a (T, R) panel, clipped at the 99th percentile of |amp|."""
    p = np.asarray(panel, dtype=np.float64)
    if p.ndim != 2:
        raise ValueError(f"waveform panel must be 2-d, got shape {p.shape}")
    c = float(np.percentile(np.abs(p), 99))
    if c == 0.0:
        return np.full(p.shape, 128, dtype=np.uint8)
    u = np.clip(p, -c, c) / c
    return np.clip(np.rint((u + 1.0) * 127.5), 0, 255).astype(np.uint8)


def render_velocity(arr, path):
    """Write the first velocity map in arr as a PPM; returns the path."""
    arr = np.asarray(arr)
    while arr.ndim > 2:
        arr = arr[0]
    write_ppm(path, velocity_pixels(arr))
    return path


def render_waveform(arr, path):
    """Write per-source PGM panels; returns the list of paths written."""
    arr = np.asarray(arr)
    if arr.ndim == 4:
        arr = arr[0]
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"waveform data must be (sources, nt, receivers), "
                         f"got shape {arr.shape}")
    stem, dot, ext = str(path).rpartition(".")
    if not dot:
        stem, ext = str(path), "pgm"
    paths = []
    for s in range(arr.shape[0]):
        out = f"{stem}_s{s}.{ext}"
        write_pgm(out, waveform_pixels(arr[s]))
        paths.append(out)
    return paths
