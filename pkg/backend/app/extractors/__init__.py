"""特征提取器"""
