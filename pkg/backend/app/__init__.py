"""wfleak：网站指纹信息泄露度量"""

__version__ = "0.1.0"
