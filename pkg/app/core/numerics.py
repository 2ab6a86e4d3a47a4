"""所有业务模块共用的数值核函数。

贝塞尔函数、Hermitian特征分解、Moore-Penrose伪逆和短时傅里叶变换。
这些函数都是输入的纯函数，可以在多个线程中并发调用。
"""

from typing import Literal

import numpy as np
from numpy.typing import (
    ArrayLike,
    NDArray,
)
from pydantic import (
    BaseModel,
    ConfigDict,
    model_validator,
)
from scipy import signal as sp_signal
from scipy import special

from app.core.errors import NumericsDomainError

MAX_BESSEL_ORDER = 64
MAX_BESSEL_ARG = 1000.0
HERMITIAN_RTOL = 1e-10


class Spectrogram(BaseModel):
    """时频分布，magnitudes[f, t] 对应 freq_axis[f] 与 time_axis[t]。"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    magnitudes: np.ndarray
    time_axis: np.ndarray
    freq_axis: np.ndarray

    @model_validator(mode="after")
    def validate_axes(self) -> "Spectrogram":
        """校验坐标轴长度与幅度非负。"""
        if self.magnitudes.shape != (self.freq_axis.size, self.time_axis.size):
            raise ValueError("频谱图坐标轴长度与幅度矩阵不匹配")
        if np.any(self.magnitudes < 0):
            raise ValueError("频谱图幅度必须非负")
        return self

    @property
    def freq_bins(self) -> int:
        """频率单元数。"""
        return self.freq_axis.size

    @property
    def time_bins(self) -> int:
        """时间帧数。"""
        return self.time_axis.size

    @property
    def bin_width(self) -> float:
        """频率单元宽度（Hz）。"""
        return float(self.freq_axis[1] - self.freq_axis[0]) if self.freq_bins > 1 else 0.0


def as_complex_matrix(a: ArrayLike, name: str = "matrix") -> NDArray[np.complex128]:
    """把输入转换为二维复矩阵并检查有限性。

    Raises:
        NumericsDomainError: 不是二维或含NaN/Inf
    """
    arr = np.asarray(a, dtype=np.complex128)
    if arr.ndim != 2:
        raise NumericsDomainError(f"{name} 必须是二维矩阵", shape=list(arr.shape))
    if not np.all(np.isfinite(arr)):
        raise NumericsDomainError(f"{name} 含有非有限元素")
    return arr


def bessel_j(order: ArrayLike, x: ArrayLike) -> np.ndarray | float:
    """整数阶第一类贝塞尔函数 J_order(x)。

    支持numpy广播；标量输入返回float。

    Args:
        order: 整数阶数，|order| ≤ 64
        x: 实数自变量，|x| ≤ 1000

    Returns:
        J_order(x)

    Raises:
        NumericsDomainError: 阶数非整数或越界，x非有限或越界
    """
    n = np.asarray(order)
    xv = np.asarray(x, dtype=np.float64)
    if not np.all(np.equal(np.mod(n, 1), 0)):
        raise NumericsDomainError("贝塞尔阶数必须是整数")
    if np.any(np.abs(n) > MAX_BESSEL_ORDER):
        raise NumericsDomainError("贝塞尔阶数超出范围", max_order=MAX_BESSEL_ORDER)
    if not np.all(np.isfinite(xv)):
        raise NumericsDomainError("贝塞尔自变量必须有限")
    if np.any(np.abs(xv) > MAX_BESSEL_ARG):
        raise NumericsDomainError("贝塞尔自变量超出范围", max_arg=MAX_BESSEL_ARG)

    values = special.jv(n.astype(np.float64), xv)
    if np.ndim(values) == 0:
        return float(values)
    return values


def hermitian_evd(a: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.complex128]]:
    """Hermitian矩阵的特征分解，特征值降序。

    Args:
        a: 方阵，在1e-10相对容差内为Hermitian

    Returns:
        (eigenvalues, eigenvectors)，eigenvectors的第i列对应eigenvalues[i]

    Raises:
        NumericsDomainError: 非方阵或非Hermitian
    """
    mat = as_complex_matrix(a)
    if mat.shape[0] != mat.shape[1]:
        raise NumericsDomainError("特征分解需要方阵", shape=list(mat.shape))
    scale = max(np.linalg.norm(mat), np.finfo(float).tiny)
    asym = np.linalg.norm(mat - mat.conj().T)
    if asym > HERMITIAN_RTOL * scale:
        raise NumericsDomainError("矩阵不是Hermitian", relative_asymmetry=float(asym / scale))

    # eigh只读取下三角，先对称化
    values, vectors = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    order = np.argsort(values)[::-1]
    return values[order], vectors[:, order]


def pseudo_inverse(a: ArrayLike, tol: float | None = None) -> NDArray[np.complex128]:
    """Moore-Penrose伪逆。

    Args:
        a: 任意形状的二维矩阵
        tol: 奇异值截断阈值（绝对值），默认1e-12倍最大奇异值

    Returns:
        形状为转置形状的伪逆

    Raises:
        NumericsDomainError: tol为负或矩阵含非有限元素
    """
    mat = as_complex_matrix(a)
    if tol is not None and tol < 0:
        raise NumericsDomainError("tol必须非负", tol=tol)
    if mat.size == 0:
        return np.zeros(mat.shape[::-1], dtype=np.complex128)

    s_max = np.linalg.norm(mat, ord=2)
    if s_max == 0.0:
        return np.zeros(mat.shape[::-1], dtype=np.complex128)
    rcond = 1e-12 if tol is None else tol / s_max
    return np.linalg.pinv(mat, rcond=rcond)


def make_window(window_len: int, window: Literal["gaussian", "hann"] = "gaussian") -> NDArray[np.float64]:
    """生成STFT窗函数；高斯窗 σ = window_len/6。"""
    if window == "gaussian":
        return sp_signal.windows.gaussian(window_len, std=window_len / 6.0, sym=True)
    if window == "hann":
        return sp_signal.windows.hann(window_len, sym=False)
    raise NumericsDomainError("未知窗函数", window=window)


def stft(
    samples: ArrayLike,
    sample_rate: float,
    window_len: int = 128,
    hop: int = 16,
    window: Literal["gaussian", "hann"] = "gaussian",
    pad_factor: int = 4,
) -> Spectrogram:
    """复信号的短时傅里叶变换幅度。

    不做边界延拓，帧从第0个样本开始每hop个样本取一帧；
    频率轴居中后覆盖 (−fs/2, +fs/2]。

    Args:
        samples: 复数慢时间序列
        sample_rate: 采样率（Hz）
        window_len: 窗长（样本）
        hop: 帧移（样本），1 ≤ hop ≤ window_len
        window: 窗函数类型
        pad_factor: 补零倍数

    Returns:
        Spectrogram

    Raises:
        NumericsDomainError: 空信号、窗长超过信号长度或参数越界
    """
    x = np.asarray(samples, dtype=np.complex128).ravel()
    if x.size == 0:
        raise NumericsDomainError("STFT输入为空")
    if window_len < 1 or window_len > x.size:
        raise NumericsDomainError("窗长超过信号长度", window_len=window_len, length=int(x.size))
    if hop < 1 or hop > window_len:
        raise NumericsDomainError("帧移必须在 [1, window_len] 内", hop=hop)
    if pad_factor < 1 or sample_rate <= 0:
        raise NumericsDomainError(
            "补零倍数和采样率必须为正", pad_factor=pad_factor, sample_rate=sample_rate
        )

    nfft = window_len * pad_factor
    freqs, times, zxx = sp_signal.stft(
        x,
        fs=sample_rate,
        window=make_window(window_len, window),
        nperseg=window_len,
        noverlap=window_len - hop,
        nfft=nfft,
        detrend=False,
        return_onesided=False,
        boundary=None,
        padded=False,
        scaling="spectrum",
    )
    magnitudes = np.fft.fftshift(np.abs(zxx), axes=0)
    freqs = np.fft.fftshift(freqs)

    # 偶数点FFT居中后首元素为 −fs/2，移到末尾作为 +fs/2
    if nfft % 2 == 0:
        magnitudes = np.roll(magnitudes, -1, axis=0)
        freqs = np.roll(freqs, -1)
        freqs[-1] = sample_rate / 2.0

    return Spectrogram(magnitudes=magnitudes, time_axis=np.asarray(times, dtype=np.float64), freq_axis=freqs)
