"""MUSIC成像的模块配置。"""

import os


class ImagingConfig:
    """成像配置类。"""

    def __init__(self):
        """初始化成像配置。"""
        # 特征分解前的对角加载系数（乘以协方差矩阵的迹）
        self.DIAGONAL_LOADING = float(os.getenv("OAM_DIAGONAL_LOADING", "1e-10"))

        # 归一化谱值上限，即 a^H Q_n Q_n^H a / ‖a‖² 的下限取倒数
        self.SPECTRUM_DYNAMIC_RANGE = float(os.getenv("OAM_SPECTRUM_DYNAMIC_RANGE", "1e15"))

        # 每批计算的网格行数
        self.SPECTRUM_CHUNK = int(os.getenv("OAM_SPECTRUM_CHUNK", "32"))

        # 默认搜索网格
        self.ANGLE_STEP_DEG = float(os.getenv("OAM_ANGLE_STEP_DEG", "0.2"))
        self.RANGE_STEP_M = float(os.getenv("OAM_RANGE_STEP_M", "0.05"))
        self.REFINE_FACTOR = int(os.getenv("OAM_REFINE_FACTOR", "10"))

        # 搜索时俯仰轴与距离轴相对名义步长的加密倍数
        self.ELEVATION_OVERSAMPLE = int(os.getenv("OAM_ELEVATION_OVERSAMPLE", "4"))
        self.RANGE_OVERSAMPLE = int(os.getenv("OAM_RANGE_OVERSAMPLE", "5"))

        # 联合谱上每个散射点保留的候选峰数
        self.CANDIDATES_PER_SOURCE = int(os.getenv("OAM_CANDIDATES_PER_SOURCE", "6"))


imaging_config = ImagingConfig()
