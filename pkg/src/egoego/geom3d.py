"""Rotation and vector algebra in double precision.

Rotations are stored as 3x3 matrices everywhere; the 6D representation
(first two matrix columns) and unit quaternions (w, x, y, z) are only used
as interchange formats. All functions broadcast over leading batch axes.
"""
import numpy as np

ORTHO_TOL = 1e-6
_DEGENERATE_EPS = 1e-8
_TAYLOR_EPS = 1e-8


class DegenerateInputError(ValueError):
    """Input vectors are zero-length or parallel where a frame is required."""


class InvalidRotationError(ValueError):
    """A matrix that should be a rotation is not orthonormal with det +1."""


def _as_array(x):
    return np.asarray(x, dtype=np.float64)


def is_rotation(R, tol=ORTHO_TOL):
    R = _as_array(R)
    if R.shape[-2:] != (3, 3) or not np.all(np.isfinite(R)):
        return False
    RtR = np.swapaxes(R, -1, -2) @ R
    ortho = np.max(np.abs(RtR - np.eye(3)), initial=0.0) <= tol
    det = np.max(np.abs(np.linalg.det(R) - 1.0), initial=0.0) <= tol
    return bool(ortho and det)


def check_rotation(R, tol=ORTHO_TOL):
    if not is_rotation(R, tol):
        raise InvalidRotationError("matrix is not a valid rotation (R^T R != I or det != +1)")
    return _as_array(R)


def normalize(v, eps=_DEGENERATE_EPS):
    v = _as_array(v)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n <= eps):
        raise DegenerateInputError("cannot normalize a (near) zero-length vector")
    return v / n


def skew(v):
    v = _as_array(v)
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    o = np.zeros_like(x)
    return np.stack(
        [np.stack([o, -z, y], -1), np.stack([z, o, -x], -1), np.stack([-y, x, o], -1)], -2
    )


def sixd_to_rotmat(r):
    """Gram-Schmidt a 6D vector (a1 ++ a2) into a rotation with columns (b1, b2, b1 x b2)."""
    r = _as_array(r)
    if r.shape[-1] != 6:
        raise ValueError(f"expected trailing dimension 6, got {r.shape}")
    a1, a2 = r[..., :3], r[..., 3:]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    if np.any(n1 <= _DEGENERATE_EPS):
        raise DegenerateInputError("first 6D column has zero length")
    b1 = a1 / n1
    # sine of the angle between a1 and a2
    sin = np.linalg.norm(np.cross(b1, a2), axis=-1) / np.maximum(np.linalg.norm(a2, axis=-1), 1e-300)
    if np.any(sin <= _DEGENERATE_EPS):
        raise DegenerateInputError("6D columns are zero or parallel")
    u2 = a2 - np.sum(a2 * b1, axis=-1, keepdims=True) * b1
    b2 = u2 / np.linalg.norm(u2, axis=-1, keepdims=True)
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def rotmat_to_sixd(R, check=True):
    R = check_rotation(R) if check else _as_array(R)
    return np.concatenate([R[..., :, 0], R[..., :, 1]], axis=-1)


def rotation_between_vectors(a, b):
    """Minimal-angle rotation taking direction a onto direction b.

    Antipodal inputs rotate by pi about normalize(a x e), with e = x-axis
    unless a is within ~25 degrees of it, then e = y-axis.
    """
    a = normalize(a)
    b = normalize(b)
    if a.ndim != 1 or b.ndim != 1:
        return np.stack([rotation_between_vectors(x, y) for x, y in zip(*np.broadcast_arrays(a, b))])
    axis = np.cross(a, b)
    s = np.linalg.norm(axis)
    c = float(np.dot(a, b))
    if s < 1e-12 and c > 0:
        return np.eye(3)
    if c < 0 and s < 1e-6:
        e = np.array([1.0, 0.0, 0.0]) if abs(a[0]) <= 0.9 else np.array([0.0, 1.0, 0.0])
        k = normalize(np.cross(a, e))
        # R = 2 k k^T - I is the half-turn about k
        return 2.0 * np.outer(k, k) - np.eye(3)
    K = skew(axis)
    # Rodrigues with sin = s, cos = c and unnormalised axis
    return np.eye(3) + K + K @ K * ((1.0 - c) / (s * s))


def so3_exp(v):
    """Rodrigues map from a rotation vector to a matrix."""
    v = _as_array(v)
    if not np.all(np.isfinite(v)):
        raise ValueError("rotation vector must be finite")
    theta = np.linalg.norm(v, axis=-1)[..., None, None]
    K = skew(v)
    small = theta < _TAYLOR_EPS
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    return np.eye(3) + a * K + b * (K @ K)


def so3_log(R):
    """Inverse of so3_exp, returning the rotation vector with angle in [0, pi]."""
    R = _as_array(R)
    if R.ndim > 2:
        flat = R.reshape(-1, 3, 3)
        return np.stack([so3_log(m) for m in flat]).reshape(R.shape[:-2] + (3,))
    cos = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    sin = 0.5 * np.linalg.norm(w)
    theta = np.arctan2(sin, cos)
    if theta < 1e-6:
        return 0.5 * w * (1.0 + theta**2 / 6.0)
    if np.pi - theta > 1e-4:
        return w * (theta / (2.0 * np.sin(theta)))
    # near pi: axis from the symmetric part, sign from the skew part
    B = (R + R.T) / 2.0 - cos * np.eye(3)
    i = int(np.argmax(np.diag(B)))
    axis = B[:, i] / np.sqrt(max(B[i, i], 1e-300))
    axis = axis / np.linalg.norm(axis)
    if np.dot(axis, w) < 0:
        axis = -axis
    return axis * theta


def relative_rotation(O_prev, O_cur):
    O_prev = check_rotation(O_prev)
    O_cur = check_rotation(O_cur)
    return np.swapaxes(O_prev, -1, -2) @ O_cur


def rot_x(angle):
    return so3_exp(np.array([angle, 0.0, 0.0]))


def rot_y(angle):
    return so3_exp(np.array([0.0, angle, 0.0]))


def rot_z(angle):
    """Rotation about z; accepts arrays of angles."""
    angle = _as_array(angle)
    c, s = np.cos(angle), np.sin(angle)
    o, one = np.zeros_like(c), np.ones_like(c)
    return np.stack(
        [np.stack([c, -s, o], -1), np.stack([s, c, o], -1), np.stack([o, o, one], -1)], -2
    )


def quat_to_rotmat(q):
    q = normalize(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        -2,
    )


def random_rotation(rng, size=None):
    """Uniform rotations from normalised Gaussian quaternions."""
    shape = (4,) if size is None else (size, 4)
    return quat_to_rotmat(rng.standard_normal(shape))


def yaw_alignment(R_from, R_to):
    """Rotation about z that best maps orientation R_from onto R_to (Frobenius sense)."""
    M = _as_array(R_from) @ _as_array(R_to).T
    theta = np.arctan2(M[0, 1] - M[1, 0], M[0, 0] + M[1, 1])
    return rot_z(theta)
