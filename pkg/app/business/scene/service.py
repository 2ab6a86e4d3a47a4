"""目标运动学与多普勒闭式规律。

所有函数都是不可变状态上的纯函数；时间参数既可以是标量也可以是numpy数组。
"""

import numpy as np
from numpy.typing import (
    ArrayLike,
    NDArray,
)

from app.business.scene.schemas import (
    ScattererState,
    TargetState,
)
from app.core.errors import SceneGeometryError

MIN_SIN_ELEVATION = 1e-12


def rotation_matrix(elevation: float, azimuth: float) -> NDArray[np.float64]:
    """由质心角度确定的旋转矩阵 R_ro。

    Args:
        elevation: 质心俯仰角 θ⁰
        azimuth: 质心方位角 φ⁰

    Returns:
        3×3 正交矩阵
    """
    ct, st = np.cos(elevation), np.sin(elevation)
    cp, sp = np.cos(azimuth), np.sin(azimuth)
    return np.array(
        [
            [cp, -sp, 0.0],
            [ct * sp, ct * cp, -st],
            [st * sp, st * cp, ct],
        ]
    )


def spherical_to_cartesian(r: ArrayLike, theta: ArrayLike, phi: ArrayLike) -> NDArray[np.float64]:
    """球坐标转笛卡尔坐标，最后一维为 (x, y, z)。"""
    r, theta, phi = np.broadcast_arrays(np.asarray(r, float), np.asarray(theta, float), np.asarray(phi, float))
    st = np.sin(theta)
    return np.stack([r * st * np.cos(phi), r * st * np.sin(phi), r * np.cos(theta)], axis=-1)


def cartesian_to_spherical(xyz: ArrayLike) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """笛卡尔坐标转球坐标，φ 归一到 [0, 2π)。

    Raises:
        SceneGeometryError: 位置到达原点
    """
    xyz = np.asarray(xyz, dtype=np.float64)
    r = np.linalg.norm(xyz, axis=-1)
    if np.any(r <= 0.0):
        raise SceneGeometryError("散射点位置到达阵列原点")
    theta = np.arccos(np.clip(xyz[..., 2] / r, -1.0, 1.0))
    phi = np.mod(np.arctan2(xyz[..., 1], xyz[..., 0]), 2 * np.pi)
    return r, theta, phi


def translation_direction(target: TargetState) -> NDArray[np.float64]:
    """平动方向单位向量，位于视线与俯仰方向张成的平面内。"""
    ct, st = np.cos(target.elevation), np.sin(target.elevation)
    cp, sp = np.cos(target.azimuth), np.sin(target.azimuth)
    r_hat = np.array([st * cp, st * sp, ct])
    theta_hat = np.array([ct * cp, ct * sp, -st])
    return np.cos(target.direction) * r_hat + np.sin(target.direction) * theta_hat


def centroid_position(target: TargetState, t: ArrayLike) -> NDArray[np.float64]:
    """t 时刻质心的笛卡尔坐标。"""
    t = np.asarray(t, dtype=np.float64)
    origin = spherical_to_cartesian(target.range_m, target.elevation, target.azimuth)
    return origin + np.expand_dims(np.asarray(target.speed * t), -1) * translation_direction(target)


def scatterer_cartesian(target: TargetState, s: ScattererState, t: ArrayLike) -> NDArray[np.float64]:
    """t 时刻散射点的笛卡尔坐标。

    Raises:
        SceneGeometryError: t 为负
    """
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise SceneGeometryError("时间必须非负")
    base = centroid_position(target, t)
    if s.rotation_radius == 0.0:
        return base
    angle = target.spin_rate * t + s.initial_phase
    local = np.stack(
        [s.rotation_radius * np.cos(angle), s.rotation_radius * np.sin(angle), np.zeros_like(angle)], axis=-1
    )
    return base + local @ rotation_matrix(target.elevation, target.azimuth).T


def scatterer_position(
    target: TargetState, s: ScattererState, t: ArrayLike
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """t 时刻散射点的球坐标 (r, θ, φ)。

    Raises:
        SceneGeometryError: t 为负或位置到达原点
    """
    return cartesian_to_spherical(scatterer_cartesian(target, s, t))


def _check_elevation(target: TargetState) -> None:
    if abs(np.sin(target.elevation)) < MIN_SIN_ELEVATION:
        raise SceneGeometryError("俯仰角为0时旋转多普勒系数奇异", elevation=target.elevation)


def rotation_gain(target: TargetState, s: ScattererState) -> float:
    """旋转多普勒幅度系数 g。

    Raises:
        SceneGeometryError: θ⁰ = 0
    """
    _check_elevation(target)
    gamma = s.rotation_radius
    if gamma == 0.0:
        return 0.0
    st, sp, cp = np.sin(target.elevation), np.sin(target.azimuth), np.cos(target.azimuth)
    lever = target.range_m - gamma / np.tan(target.half_cone_angle)
    return float(-gamma * np.sqrt(sp**2 + cp**2 * st**2) / (lever * st))


def rotation_phase_offset(target: TargetState) -> float:
    """旋转多普勒相位偏移 δ，两参数反正切。"""
    return float(np.arctan2(np.cos(target.azimuth) * np.sin(target.elevation), np.sin(target.azimuth)))


def rotational_doppler(target: TargetState, s: ScattererState, mode: int, t: ArrayLike) -> np.ndarray | float:
    """方位变化引起的旋转多普勒频移（Hz），闭式规律。

    Raises:
        SceneGeometryError: θ⁰ = 0
    """
    g = rotation_gain(target, s)
    delta = rotation_phase_offset(target)
    t = np.asarray(t, dtype=np.float64)
    value = mode / (2 * np.pi) * g * target.spin_rate * np.cos(target.spin_rate * t + s.initial_phase + delta)
    return float(value) if value.ndim == 0 else value


def scatterer_velocity(target: TargetState, s: ScattererState, t: ArrayLike) -> NDArray[np.float64]:
    """t 时刻散射点的笛卡尔速度，平动加绕自旋轴的转动。"""
    t = np.asarray(t, dtype=np.float64)
    vel = np.broadcast_to(target.speed * translation_direction(target), t.shape + (3,)).copy()
    if s.rotation_radius > 0.0:
        angle = target.spin_rate * t + s.initial_phase
        local = s.rotation_radius * target.spin_rate * np.stack(
            [-np.sin(angle), np.cos(angle), np.zeros_like(angle)], axis=-1
        )
        vel = vel + local @ rotation_matrix(target.elevation, target.azimuth).T
    return vel


def azimuth_rate_doppler(target: TargetState, s: ScattererState, mode: int, t: ArrayLike) -> np.ndarray | float:
    """运动学轨迹的方位角速率对应的多普勒 (ℓ/2π)·dφ/dt（Hz）。"""
    t = np.asarray(t, dtype=np.float64)
    pos = scatterer_cartesian(target, s, t)
    vel = scatterer_velocity(target, s, t)
    rho2 = pos[..., 0] ** 2 + pos[..., 1] ** 2
    if np.any(rho2 == 0.0):
        raise SceneGeometryError("散射点位于z轴上，方位角无定义")
    phi_dot = (pos[..., 0] * vel[..., 1] - pos[..., 1] * vel[..., 0]) / rho2
    value = mode / (2 * np.pi) * phi_dot
    return float(value) if value.ndim == 0 else value


def range_rate_doppler(target: TargetState, s: ScattererState, wavenumber: float, t: ArrayLike) -> np.ndarray | float:
    """双程距离变化引起的多普勒 (k/π)·dr/dt（Hz），含自旋造成的径向微动。

    Raises:
        SceneGeometryError: 波数非正
    """
    if wavenumber <= 0:
        raise SceneGeometryError("波数必须为正", wavenumber=wavenumber)
    t = np.asarray(t, dtype=np.float64)
    pos = scatterer_cartesian(target, s, t)
    r_dot = np.sum(pos * scatterer_velocity(target, s, t), axis=-1) / np.linalg.norm(pos, axis=-1)
    value = wavenumber / np.pi * r_dot
    return float(value) if value.ndim == 0 else value


def linear_doppler(target: TargetState, wavenumber: float) -> float:
    """距离变化引起的线性多普勒频移（Hz）。

    Raises:
        SceneGeometryError: 波数非正
    """
    if wavenumber <= 0:
        raise SceneGeometryError("波数必须为正", wavenumber=wavenumber)
    return float(wavenumber * target.speed * np.cos(target.direction) / (2 * np.pi))
