"""SE(3) poses stored as translation + unit quaternion (TUM order: qx qy qz qw)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation


class PoseError(ValueError):
    pass


@dataclass(frozen=True)
class PoseSE3:
    """Rigid transform; by convention camera-to-world when used as a camera pose."""

    translation: np.ndarray
    quaternion: np.ndarray  # (qx, qy, qz, qw)

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3)
        q = np.asarray(self.quaternion, dtype=float).reshape(4)
        n = np.linalg.norm(q)
        if n == 0 or not np.all(np.isfinite(q)) or not np.all(np.isfinite(t)):
            raise PoseError("invalid pose: non-finite values or zero quaternion")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "quaternion", q / n)

    @classmethod
    def identity(cls) -> "PoseSE3":
        return cls(np.zeros(3), np.array([0.0, 0.0, 0.0, 1.0]))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "PoseSE3":
        m = np.asarray(m, dtype=float)
        q = Rotation.from_matrix(m[:3, :3]).as_quat()
        return cls(m[:3, 3], q)

    @classmethod
    def from_rt(cls, r: np.ndarray, t: np.ndarray) -> "PoseSE3":
        return cls(np.asarray(t, dtype=float), Rotation.from_matrix(r).as_quat())

    @property
    def rotation(self) -> Rotation:
        return Rotation.from_quat(self.quaternion)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.as_matrix()
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "PoseSE3") -> "PoseSE3":
        """self ∘ other: apply `other` first, then `self`."""
        r = self.rotation * other.rotation
        t = self.rotation.apply(other.translation) + self.translation
        return PoseSE3(t, r.as_quat())

    def inverse(self) -> "PoseSE3":
        rinv = self.rotation.inv()
        return PoseSE3(-rinv.apply(self.translation), rinv.as_quat())

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or many (N, 3)."""
        return self.rotation.apply(points) + self.translation

    def rotation_angle(self) -> float:
        """Rotation magnitude in radians."""
        return float(self.rotation.magnitude())

    def __matmul__(self, other: "PoseSE3") -> "PoseSE3":
        return self.compose(other)
