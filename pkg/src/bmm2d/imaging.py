"""Image approximation and segmentation built on the field estimators.

Pipeline: a grayscale image is centered, tiled into overlapping blocks,
each block gets its own fitted recursion, and the one-step in-sample
prediction of every interior pixel forms the approximated image.  The
residual image drives segmentation.  Similarity between two images is
measured by a windowed structural index and by directional codispersion.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import convolve1d

from .errors import DegenerateInputError, DomainError, FormatError, UndefinedIndexError
from .estimators import OptimizerConfig, estimate
from .grid import ArParams, Grid2D

_WS = frozenset(b" \t\r\n\x0b\x0c")
_LUMA_C1 = (0.01 * 255.0) ** 2
_LUMA_C2 = (0.03 * 255.0) ** 2
_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_CQ_LAGS = ((0, 1), (1, 0), (1, 1), (1, -1))


@dataclass(frozen=True)
class ImageGray:
    """Grayscale raster, float64, at least 2x2.  Values are unconstrained;
    only PGM output clamps or rescales to the 8-bit range."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] < 2:
            raise DomainError(f"image must be 2-D with at least 2 rows and 2 cols, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("image values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def read_pgm(path) -> ImageGray:
    """Read a binary (P5) PGM file with maxval up to 255."""
    with open(path, "rb") as fh:
        buf = fh.read()
    tokens = []
    i, n = 0, len(buf)
    while len(tokens) < 4 and i < n:
        c = buf[i]
        if c in _WS:
            i += 1
        elif c == 0x23:  # comment, runs to end of line
            while i < n and buf[i] not in (0x0A, 0x0D):
                i += 1
        else:
            start = i
            while i < n and buf[i] not in _WS and buf[i] != 0x23:
                i += 1
            tokens.append(buf[start:i])
    if len(tokens) < 4 or i >= n or buf[i] not in _WS:
        raise FormatError("malformed PGM header")
    magic = tokens[0]
    if magic != b"P5":
        if len(magic) == 2 and magic[0] == 0x50 and 0x31 <= magic[1] <= 0x36:
            raise FormatError(
                f"unsupported PGM format '{magic.decode('ascii')}'; only binary P5 is supported"
            )
        raise FormatError("malformed PGM header")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError("malformed PGM header") from None
    if width <= 0 or height <= 0 or maxval <= 0:
        raise FormatError("malformed PGM header")
    if maxval > 255:
        raise FormatError(f"maxval {maxval} exceeds 255")
    payload = buf[i + 1 : i + 1 + width * height]
    if len(payload) < width * height:
        raise FormatError("truncated PGM payload")
    values = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return ImageGray(values.astype(np.float64))


def write_pgm(image: ImageGray, path, rescale: bool = False) -> None:
    """Write a binary P5 PGM.

    With rescale=False values are clamped to [0, 255] and rounded, which is
    lossless for images that are already integral and in range.  With
    rescale=True the full value range is mapped affinely onto [0, 255] and
    the inverse transform is recorded next to the image in <path>.scale.txt
    (original = offset + stored * scale).
    """
    v = image.values
    if rescale:
        lo = float(v.min())
        hi = float(v.max())
        if hi > lo:
            scale = (hi - lo) / 255.0
            stored = (v - lo) / scale
        else:
            scale = 0.0
            stored = np.zeros_like(v)
        with open(str(path) + ".scale.txt", "w") as fh:
            fh.write(f"offset {lo:.17g}\n")
            fh.write(f"scale {scale:.17g}\n")
        pixels = np.rint(stored)
    else:
        pixels = np.rint(np.clip(v, 0.0, 255.0))
    data = pixels.astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.cols} {image.rows}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


# -- block approximation ------------------------------------------------------


@dataclass(frozen=True)
class BlockFit:
    """Fit record for one block; params is None when the block was skipped."""

    row0: int
    col0: int
    rows: int
    cols: int
    params: ArParams | None
    warning: str | None = None


@dataclass(frozen=True)
class ImageApproximation:
    approx: ImageGray
    offset: float
    block_size: int
    blocks: tuple[BlockFit, ...] = field(repr=False)

    @property
    def n_skipped(self) -> int:
        return sum(1 for b in self.blocks if b.params is None)


def _block_origins(extent: int, block: int) -> list[int]:
    # consecutive blocks share one row/col so predictions tile exactly
    origins = []
    r = 0
    while r <= extent - 2:
        origins.append(r)
        r += block - 1
    return origins


def _fit_block(xwin: np.ndarray, method: str, config: OptimizerConfig):
    try:
        res = estimate(Grid2D(xwin), method, config)
    except DegenerateInputError:
        return "skipped", None, None
    except Exception as exc:  # re-raised with block coordinates by the caller
        return "error", f"{type(exc).__name__}: {exc}", None
    return "ok", res.params.as_array(), res.warning


def approximate_image(
    image: ImageGray,
    block_size: int = 57,
    method: str = "bmm",
    config: OptimizerConfig | None = None,
    jobs: int = 1,
) -> ImageApproximation:
    """Blockwise one-step prediction of a centered image.

    The image mean is removed, each block of the centered image is fitted
    with `method`, and every pixel with all three causal neighbors inside
    its block is replaced by the fitted prediction from the observed
    neighbors.  First row and column of the image, and skipped blocks, keep
    their observed values.  The mean is added back at the end.
    """
    if block_size < 2:
        raise DomainError("block_size must be at least 2")
    if config is None:
        config = OptimizerConfig()
    z = image.values
    offset = float(z.mean())
    x = z - offset
    xhat = x.copy()

    spans = []
    for r0 in _block_origins(image.rows, block_size):
        h = min(block_size, image.rows - r0)
        for c0 in _block_origins(image.cols, block_size):
            w = min(block_size, image.cols - c0)
            # thin edge blocks borrow rows/cols above/left so the fit still
            # sees at least a 4-wide window when the image allows it
            er0 = max(0, min(r0, r0 + h - 4))
            ec0 = max(0, min(c0, c0 + w - 4))
            spans.append((r0, c0, h, w, er0, ec0))

    windows = [x[er0 : r0 + h, ec0 : c0 + w] for r0, c0, h, w, er0, ec0 in spans]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_fit_block, windows, [method] * len(spans), [config] * len(spans)))
    else:
        outcomes = [_fit_block(win, method, config) for win in windows]

    blocks = []
    for (r0, c0, h, w, _, _), (status, payload, warning) in zip(spans, outcomes):
        if status == "error":
            raise RuntimeError(f"block at ({r0}, {c0}) failed: {payload}")
        if status == "skipped":
            blocks.append(BlockFit(r0, c0, h, w, None))
            continue
        p1, p2, p3 = payload
        pr = slice(r0 + 1, r0 + h)
        pc = slice(c0 + 1, c0 + w)
        up = slice(r0, r0 + h - 1)
        left = slice(c0, c0 + w - 1)
        xhat[pr, pc] = p1 * x[up, pc] + p2 * x[pr, left] + p3 * x[up, left]
        blocks.append(BlockFit(r0, c0, h, w, ArParams(p1, p2, p3), warning))

    return ImageApproximation(
        approx=ImageGray(xhat + offset),
        offset=offset,
        block_size=block_size,
        blocks=tuple(blocks),
    )


def segment_image(image: ImageGray, approximation: ImageApproximation) -> ImageGray:
    """Residual image Z - Zhat; uniform regions shrink toward zero while
    edges and texture boundaries stand out."""
    zhat = approximation.approx.values
    if zhat.shape != image.values.shape:
        raise DomainError("approximation shape does not match image")
    return ImageGray(image.values - zhat)


# -- similarity indices -------------------------------------------------------


def _as_values(obj) -> np.ndarray:
    v = np.asarray(getattr(obj, "values", obj), dtype=np.float64)
    if v.ndim != 2:
        raise DomainError("expected a 2-D image or array")
    return v


def _ssim_kernel() -> np.ndarray:
    half = (_SSIM_WINDOW - 1) // 2
    t = np.arange(_SSIM_WINDOW, dtype=np.float64) - half
    g = np.exp(-(t * t) / (2.0 * _SSIM_SIGMA**2))
    return g / g.sum()


def _smooth(a: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return convolve1d(convolve1d(a, kernel, axis=0, mode="nearest"), kernel, axis=1, mode="nearest")


def ssim(a, b) -> float:
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5)
    on the 8-bit dynamic range; the half-window border is cropped so every
    retained window is fully supported."""
    x = _as_values(a)
    y = _as_values(b)
    if x.shape != y.shape:
        raise DomainError("images must have identical shape")
    half = (_SSIM_WINDOW - 1) // 2
    if x.shape[0] < _SSIM_WINDOW or x.shape[1] < _SSIM_WINDOW:
        raise DomainError(f"images must be at least {_SSIM_WINDOW}x{_SSIM_WINDOW}")
    k = _ssim_kernel()
    mu_x = _smooth(x, k)
    mu_y = _smooth(y, k)
    xx = _smooth(x * x, k) - mu_x * mu_x
    yy = _smooth(y * y, k) - mu_y * mu_y
    xy = _smooth(x * y, k) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + _LUMA_C1) * (2.0 * xy + _LUMA_C2)
    den = (mu_x * mu_x + mu_y * mu_y + _LUMA_C1) * (xx + yy + _LUMA_C2)
    smap = num / den
    return float(smap[half:-half, half:-half].mean())


def _lagged_pairs(v: np.ndarray, lag: tuple[int, int]) -> np.ndarray:
    dr, dc = lag
    rows, cols = v.shape
    if abs(dr) >= rows or abs(dc) >= cols:
        raise DomainError(f"lag {lag} does not fit a {rows}x{cols} image")
    r = slice(max(dr, 0), rows + min(dr, 0))
    c = slice(max(dc, 0), cols + min(dc, 0))
    r0 = slice(max(-dr, 0), rows - max(dr, 0))
    c0 = slice(max(-dc, 0), cols - max(dc, 0))
    return v[r, c] - v[r0, c0]


def codispersion(a, b, lag: tuple[int, int]) -> float:
    """Directional codispersion at the given (row, col) lag.

    Correlates the two images' increments along the lag direction.  Raises
    UndefinedIndexError when either image has no variation along the lag.
    """
    x = _as_values(a)
    y = _as_values(b)
    if x.shape != y.shape:
        raise DomainError("images must have identical shape")
    dx = _lagged_pairs(x, lag)
    dy = _lagged_pairs(y, lag)
    sx = float(np.sum(dx * dx))
    sy = float(np.sum(dy * dy))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedIndexError(f"codispersion undefined at lag {lag}: no variation")
    return float(np.sum(dx * dy) / np.sqrt(sx * sy))


def cq_index(a, b, lag: tuple[int, int]) -> float:
    """Codispersion weighted by a luminance comparison of the image means."""
    x = _as_values(a)
    y = _as_values(b)
    rho = codispersion(x, y, lag)
    mx = float(x.mean())
    my = float(y.mean())
    luminance = (2.0 * mx * my + _LUMA_C1) / (mx * mx + my * my + _LUMA_C1)
    return luminance * rho


def cq_max(a, b) -> float:
    """Maximum cq_index over the four unit lags; lags undefined for these
    images are skipped, and the result is undefined only if all four are."""
    best = None
    for lag in _CQ_LAGS:
        try:
            value = cq_index(a, b, lag)
        except UndefinedIndexError:
            continue
        if best is None or value > best:
            best = value
    if best is None:
        raise UndefinedIndexError("cq_max undefined: no lag has variation in both images")
    return best
