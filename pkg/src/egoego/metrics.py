"""Head and body evaluation metrics. Inputs are in meters, outputs in mm where noted."""
import json
from dataclasses import dataclass, field

import numpy as np

M_TO_MM = 1000.0
DEFAULT_CONTACT_HEIGHT = 0.05
COLUMNS = ("o_head", "t_head", "mpjpe", "accel", "fs")


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def head_orientation_error(R_pred, R_gt):
    """Mean Frobenius norm of R_pred R_gt^T - I (unitless)."""
    R_pred, R_gt = _pair(R_pred, R_gt)
    diff = R_pred @ np.swapaxes(R_gt, -1, -2) - np.eye(3)
    return float(np.linalg.norm(diff, ord="fro", axis=(-2, -1)).mean())


def head_translation_error(p_pred, p_gt):
    p_pred, p_gt = _pair(p_pred, p_gt)
    return float(np.linalg.norm(p_pred - p_gt, axis=-1).mean() * M_TO_MM)


def mpjpe(joints_pred, joints_gt):
    """Mean per-joint position error in mm, no re-rooting."""
    joints_pred, joints_gt = _pair(joints_pred, joints_gt)
    return float(np.linalg.norm(joints_pred - joints_gt, axis=-1).mean() * M_TO_MM)


def second_difference(p, dt):
    return (p[2:] - 2.0 * p[1:-1] + p[:-2]) / dt**2


def accel_error(joints_pred, joints_gt, dt):
    """Mean norm of the acceleration difference over interior frames (mm/s^2)."""
    joints_pred, joints_gt = _pair(joints_pred, joints_gt)
    if len(joints_pred) < 3:
        raise ValueError("accel_error needs at least 3 frames")
    if not dt > 0:
        raise ValueError("dt must be positive")
    diff = second_difference(joints_pred - joints_gt, dt)
    return float(np.linalg.norm(diff, axis=-1).mean() * M_TO_MM)


def foot_skating(joints, foot_indices, H=DEFAULT_CONTACT_HEIGHT):
    """Height-weighted horizontal foot slide (mm) over steps with height below H.

    ``joints`` is (T, J, 3) in meters with z up. Per step, v is the L1 norm of the
    xy displacement to the next frame and h the height at the step's first frame.
    """
    if not H > 0:
        raise ValueError("contact height H must be positive")
    feet = np.asarray(joints, dtype=np.float64)[:, list(foot_indices)]
    v = np.abs(np.diff(feet[..., :2], axis=0)).sum(-1) * M_TO_MM
    h = feet[:-1, :, 2]
    mask = h < H
    if not mask.any():
        return 0.0
    return float((v * (2.0 - 2.0 ** (h / H)))[mask].mean())


@dataclass
class MetricReport:
    """Per-sequence metric rows and their means, columns ordered O_head, T_head, MPJPE, Accel, FS."""

    rows: dict = field(default_factory=dict)  # sequence id -> {column: value}
    meta: dict = field(default_factory=dict)

    def add(self, seq_id, **values):
        row = {k: float(values[k]) for k in COLUMNS if values.get(k) is not None}
        if any(v < 0 for v in row.values()):
            raise ValueError(f"metrics must be non-negative: {row}")
        self.rows[str(seq_id)] = row

    @property
    def aggregate(self):
        out = {}
        for col in COLUMNS:
            vals = [r[col] for r in self.rows.values() if col in r]
            if vals:
                out[col] = float(np.mean(vals))
        return out

    def to_dict(self):
        return {"aggregate": self.aggregate, "per_sequence": self.rows, "meta": self.meta}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    @classmethod
    def from_dict(cls, d):
        return cls(rows=d["per_sequence"], meta=d.get("meta", {}))

    def to_table(self):
        header = ["sequence", "O_head", "T_head", "MPJPE", "Accel", "FS"]
        lines = [header]

        def fmt(row):
            return [f"{row[c]:.4f}" if c == "o_head" and c in row else (f"{row[c]:.2f}" if c in row else "-")
                    for c in COLUMNS]

        for seq_id, row in self.rows.items():
            lines.append([seq_id] + fmt(row))
        lines.append(["mean"] + fmt(self.aggregate))
        widths = [max(len(r[i]) for r in lines) for i in range(len(header))]
        return "\n".join("  ".join(cell.rjust(w) for cell, w in zip(r, widths)) for r in lines)
