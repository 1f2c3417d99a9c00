"""Input validation helpers shared by the estimators and the functional API.

scikit-learn's ``check_array`` rejects complex input, so channel matrices and
combined samples go through the helpers here instead.
"""

import numbers

import numpy as np

from .exceptions import DimensionError, DomainError


def check_complex_matrix(A, name="array", shape=None, allow_nd=False):
    """Return ``A`` as a finite complex128 ndarray.

    Parameters
    ----------
    A : array-like
        Real or complex input.
    name : str
        Used in error messages.
    shape : tuple, optional
        Expected shape; ``None`` entries are wildcards.
    allow_nd : bool
        Accept 3-D stacks of matrices in addition to 2-D matrices.
    """
    arr = np.asarray(A)
    if arr.dtype == object:
        raise DomainError(f"{name} must be numeric")
    arr = arr.astype(np.complex128, copy=False)
    ndims = (2, 3) if allow_nd else (2,)
    if arr.ndim not in ndims:
        raise DimensionError(f"{name} must be {' or '.join(f'{d}-D' for d in ndims)}, got {arr.ndim}-D")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains NaN or infinite entries")
    if shape is not None:
        if len(shape) != arr.ndim or any(s is not None and s != a for s, a in zip(shape, arr.shape)):
            raise DimensionError(f"{name} has shape {arr.shape}, expected {shape}")
    return arr


def check_count(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise DomainError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise DomainError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_positive(value, name, strict=True):
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise DomainError(f"{name} must be a finite real number, got {value!r}")
    if value < 0 or (strict and value == 0):
        raise DomainError(f"{name} must be {'> 0' if strict else '>= 0'}, got {value}")
    return float(value)


def check_bit_vector(b, max_bits=None, n_streams=None, name="b"):
    """Return ``b`` as a 1-D int64 array with every entry in ``[1, max_bits]``."""
    arr = np.asarray(b)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise DimensionError(f"{name} must not be empty")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise DomainError(f"{name} must contain integers")
    arr = arr.astype(np.int64)
    if n_streams is not None and arr.size != n_streams:
        raise DimensionError(f"{name} has {arr.size} entries, expected {n_streams}")
    if np.any(arr < 1):
        raise DomainError(f"{name} entries must be >= 1")
    if max_bits is not None and np.any(arr > max_bits):
        raise DomainError(f"{name} entries must be <= {max_bits}")
    return arr
