"""正向模型的模块配置。

从环境变量读取，提供默认值，与场景文件独立。
"""

import os


class ForwardModelConfig:
    """正向模型配置类。"""

    def __init__(self):
        """初始化正向模型配置。"""
        # 折叠后的物理增益，决定回波相对噪声的量级
        self.DEFAULT_GAIN = float(os.getenv("OAM_DEFAULT_GAIN", "1e9"))
        self.DEFAULT_COMM_GAIN = float(os.getenv("OAM_DEFAULT_COMM_GAIN", "1.4e4"))

        # 远场判据 r > FAR_FIELD_FACTOR·R
        self.FAR_FIELD_FACTOR = float(os.getenv("OAM_FAR_FIELD_FACTOR", "20"))

        # 慢时间分块长度，限制单次贝塞尔求值的内存
        self.CUBE_CHUNK = int(os.getenv("OAM_CUBE_CHUNK", "256"))


forward_config = ForwardModelConfig()
