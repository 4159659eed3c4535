"""Synthetic data and binary file formats.

Formats (all little-endian):

``IKAP`` patch matrix::

    b"IKAP" | version u32 | rows u64 | cols u32 | rows*cols float64, row-major

``IKAF`` feature map::

    b"IKAF" | version u32 | d u32 | n u32 | m u32 | basis tag u32
    | approximated kernel block
    | basis block: tag 0 -> kernel block + n*d float64 filters
                   tag 1 -> include_constant u32
    | m float64 eigenvalues | n*m float64 coefficients, row-major

    kernel block: tag u32 (0 gaussian, 1 linear, 2 finite rank, 0xFFFFFFFF none)
                  gaussian -> sigma2 float64
                  finite rank -> r u32 | r float64 weights | r*d float64 directions

Image sets are directories holding ``header.txt`` (count, h, w, c, one per
line) and one ``image_NNNNNN.f64`` file per image, planar (c, h, w) float64.
"""

import io
import os
import struct

import numpy as np

from ._validation import check_matrix, check_positive_int
from .exceptions import BadMagic, FormatError, TruncatedFile, UnsupportedVersion
from .ika import FeatureMap, KernelCenteredBasis, MonomialBasis
from .kernels import FiniteRankKernel, GaussianKernel, LinearKernel
from .rng import stream

PATCH_MAGIC = b"IKAP"
PATCH_VERSION = 1
MODEL_MAGIC = b"IKAF"
MODEL_VERSION = 1
_NO_KERNEL = 0xFFFFFFFF
_F8 = np.dtype("<f8")


def generate_gaussian_mixture(components, count, seed):
    """Sample ``count`` points from an equal-weight isotropic Gaussian mixture.

    Parameters
    ----------
    components : list of (mean, scale)
    count : int
    seed : int
    """
    if len(components) == 0:
        raise ValueError("need at least one mixture component")
    means = np.array([np.asarray(mu, dtype=np.float64) for mu, _ in components])
    scales = np.array([float(s) for _, s in components])
    if means.ndim != 2:
        raise ValueError("component means must share one dimension")
    if np.any(scales <= 0):
        raise ValueError("component scales must be positive")
    count = check_positive_int(count, "count", minimum=0)
    rng = stream(seed, "mixture")
    which = rng.integers(0, len(components), size=count)
    noise = rng.standard_normal((count, means.shape[1]))
    return means[which] + scales[which, None] * noise


def random_mixture_components(n_components, dim, seed, spread=1.0, scale=0.5):
    """Component list with means drawn from ``N(0, spread^2 I)`` and a common scale."""
    rng = stream(seed, "mixture-components")
    return [(rng.normal(0.0, spread, size=dim), scale) for _ in range(n_components)]


def generate_synthetic_images(count, h, w, c, seed, n_waves=4):
    """Smooth random images: each channel is a sum of low-frequency sinusoids.

    Returns an array of shape (count, h, w, c).
    """
    for name, v in (("count", count), ("h", h), ("w", w), ("c", c)):
        check_positive_int(v, name)
    rng = stream(seed, "synthetic-images")
    yy, xx = np.meshgrid(np.arange(h) / h, np.arange(w) / w, indexing="ij")
    images = np.zeros((count, h, w, c))
    for k in range(count):
        for ch in range(c):
            freq = rng.uniform(0.5, 3.0, size=(n_waves, 2)) * rng.choice([-1, 1], size=(n_waves, 2))
            phase = rng.uniform(0, 2 * np.pi, size=n_waves)
            amp = rng.uniform(0.2, 1.0, size=n_waves)
            field = np.zeros((h, w))
            for a, (fy, fx), ph in zip(amp, freq, phase):
                field += a * np.sin(2 * np.pi * (fy * yy + fx * xx) + ph)
            images[k, :, :, ch] = 128.0 + 60.0 * field
    return images


class _Reader:
    def __init__(self, data, what):
        self.buf = memoryview(data)
        self.pos = 0
        self.what = what

    def take(self, size):
        if self.pos + size > len(self.buf):
            raise TruncatedFile(f"{self.what} ends after {len(self.buf)} bytes")
        out = self.buf[self.pos:self.pos + size]
        self.pos += size
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, count, shape=None):
        arr = np.frombuffer(self.take(8 * count), dtype=_F8).astype(np.float64)
        return arr.reshape(shape) if shape is not None else arr

    def header(self, magic, version):
        got = bytes(self.take(4)) if len(self.buf) >= 4 else bytes(self.buf)
        if got != magic:
            raise BadMagic(f"expected magic {magic!r}, found {got!r}")
        (v,) = self.unpack("<I")
        if v != version:
            raise UnsupportedVersion(f"{self.what} version {v} is not supported (expected {version})")

    def finish(self):
        if self.pos != len(self.buf):
            raise FormatError(f"{len(self.buf) - self.pos} trailing bytes in {self.what}")


def write_patches(path, X):
    """Write a patch matrix in the ``IKAP`` format."""
    X = check_matrix(X, "X", allow_empty=True)
    with open(path, "wb") as fh:
        fh.write(PATCH_MAGIC)
        fh.write(struct.pack("<IQI", PATCH_VERSION, X.shape[0], X.shape[1]))
        fh.write(X.astype(_F8).tobytes(order="C"))


def read_patches(path):
    """Read an ``IKAP`` patch matrix."""
    with open(path, "rb") as fh:
        r = _Reader(fh.read(), "patch file")
    r.header(PATCH_MAGIC, PATCH_VERSION)
    rows, cols = r.unpack("<QI")
    X = r.floats(rows * cols, (rows, cols))
    r.finish()
    return X


def _pack_kernel(buf, kernel):
    if kernel is None:
        buf.write(struct.pack("<I", _NO_KERNEL))
        return
    buf.write(struct.pack("<I", kernel.tag))
    if isinstance(kernel, GaussianKernel):
        buf.write(struct.pack("<d", kernel.sigma2))
    elif isinstance(kernel, FiniteRankKernel):
        buf.write(struct.pack("<I", kernel.rank))
        buf.write(kernel.weights.astype(_F8).tobytes())
        buf.write(kernel.directions.astype(_F8).tobytes())
    elif not isinstance(kernel, LinearKernel):
        raise TypeError(f"cannot serialize kernel {type(kernel).__name__}")


def _unpack_kernel(r, d):
    (tag,) = r.unpack("<I")
    if tag == _NO_KERNEL:
        return None
    if tag == GaussianKernel.tag:
        return GaussianKernel(r.unpack("<d")[0])
    if tag == LinearKernel.tag:
        return LinearKernel()
    if tag == FiniteRankKernel.tag:
        (rank,) = r.unpack("<I")
        return FiniteRankKernel(r.floats(rank), r.floats(rank * d, (rank, d)))
    raise FormatError(f"unknown kernel tag {tag}")


def feature_map_to_bytes(fm):
    basis = fm.basis
    if not isinstance(basis, (KernelCenteredBasis, MonomialBasis)):
        raise TypeError(f"cannot serialize basis {type(basis).__name__}")
    d, n, m = fm.n_features, basis.n_functions, fm.n_components
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(struct.pack("<IIIII", MODEL_VERSION, d, n, m, basis.tag))
    _pack_kernel(buf, fm.kernel)
    if isinstance(basis, KernelCenteredBasis):
        _pack_kernel(buf, basis.kernel)
        buf.write(basis.filters.astype(_F8).tobytes())
    else:
        buf.write(struct.pack("<I", int(basis.include_constant)))
    buf.write(fm.eigenvalues.astype(_F8).tobytes())
    buf.write(np.ascontiguousarray(fm.coefficients).astype(_F8).tobytes())
    return buf.getvalue()


def feature_map_from_bytes(data):
    r = _Reader(data, "model file")
    r.header(MODEL_MAGIC, MODEL_VERSION)
    d, n, m, basis_tag = r.unpack("<IIII")
    kernel = _unpack_kernel(r, d)
    if basis_tag == KernelCenteredBasis.tag:
        basis_kernel = _unpack_kernel(r, d)
        if basis_kernel is None:
            raise FormatError("kernel-centered basis without a kernel")
        basis = KernelCenteredBasis(basis_kernel, r.floats(n * d, (n, d)))
    elif basis_tag == MonomialBasis.tag:
        (const,) = r.unpack("<I")
        basis = MonomialBasis(d, include_constant=bool(const))
        if basis.n_functions != n:
            raise FormatError("monomial basis size does not match header")
    else:
        raise FormatError(f"unknown basis tag {basis_tag}")
    eigenvalues = r.floats(m)
    coefficients = r.floats(n * m, (n, m))
    r.finish()
    return FeatureMap(basis, eigenvalues, coefficients, kernel)


def write_feature_map(path, fm):
    with open(path, "wb") as fh:
        fh.write(feature_map_to_bytes(fm))


def read_feature_map(path):
    with open(path, "rb") as fh:
        return feature_map_from_bytes(fh.read())


def write_image_set(directory, images):
    """Store images of shape (N, H, W, C) as planar raw float64 files."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4:
        raise ValueError(f"images must have shape (N, H, W, C), got {images.shape}")
    os.makedirs(directory, exist_ok=True)
    N, H, W, C = images.shape
    with open(os.path.join(directory, "header.txt"), "w") as fh:
        fh.write(f"{N}\n{H}\n{W}\n{C}\n")
    for k in range(N):
        planar = np.transpose(images[k], (2, 0, 1)).astype(_F8)
        with open(os.path.join(directory, f"image_{k:06d}.f64"), "wb") as fh:
            fh.write(planar.tobytes(order="C"))


def read_image_set(directory):
    """Load a directory written by :func:`write_image_set`; returns (N, H, W, C)."""
    with open(os.path.join(directory, "header.txt")) as fh:
        fields = fh.read().split()
    if len(fields) != 4:
        raise FormatError("image header must hold count, h, w, c on four lines")
    N, H, W, C = (int(f) for f in fields)
    images = np.empty((N, H, W, C))
    for k in range(N):
        with open(os.path.join(directory, f"image_{k:06d}.f64"), "rb") as fh:
            raw = fh.read()
        if len(raw) != 8 * C * H * W:
            raise TruncatedFile(f"image {k} has {len(raw)} bytes, expected {8 * C * H * W}")
        images[k] = np.transpose(np.frombuffer(raw, dtype=_F8).reshape(C, H, W), (1, 2, 0))
    return images
