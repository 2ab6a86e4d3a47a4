"""数值实验的通用工具：随机数与结果文件。"""
