"""特征布局：14 个类别及其在 3043 维向量中的位置"""
from enum import IntEnum
from typing import Dict, List, Tuple

from app.schemas import LAYOUT_VERSION


class CategoryId(IntEnum):
    """特征类别（值为类别编号）"""
    PACKET_COUNT = 1
    TIME = 2
    NGRAM = 3
    TRANSPOSITION = 4
    INTERVAL_I = 5
    INTERVAL_II = 6
    INTERVAL_III = 7
    PACKET_DISTRIBUTION = 8
    BURST = 9
    FIRST20 = 10
    FIRST30 = 11
    LAST30 = 12
    PACKETS_PER_SECOND = 13
    CUMUL = 14


CATEGORY_SIZES: Dict[CategoryId, int] = {
    CategoryId.PACKET_COUNT: 13,
    CategoryId.TIME: 24,
    CategoryId.NGRAM: 124,
    CategoryId.TRANSPOSITION: 604,
    CategoryId.INTERVAL_I: 600,
    CategoryId.INTERVAL_II: 602,
    CategoryId.INTERVAL_III: 586,
    CategoryId.PACKET_DISTRIBUTION: 225,
    CategoryId.BURST: 11,
    CategoryId.FIRST20: 20,
    CategoryId.FIRST30: 2,
    CategoryId.LAST30: 2,
    CategoryId.PACKETS_PER_SECOND: 126,
    CategoryId.CUMUL: 104,
}

CATEGORY_NAMES: Dict[CategoryId, str] = {
    CategoryId.PACKET_COUNT: "Packet Count",
    CategoryId.TIME: "Time",
    CategoryId.NGRAM: "Ngram",
    CategoryId.TRANSPOSITION: "Transposition",
    CategoryId.INTERVAL_I: "Interval-I",
    CategoryId.INTERVAL_II: "Interval-II",
    CategoryId.INTERVAL_III: "Interval-III",
    CategoryId.PACKET_DISTRIBUTION: "Packet Distribution",
    CategoryId.BURST: "Burst",
    CategoryId.FIRST20: "First20",
    CategoryId.FIRST30: "First30 Packet Count",
    CategoryId.LAST30: "Last30 Packet Count",
    CategoryId.PACKETS_PER_SECOND: "Packets per Second",
    CategoryId.CUMUL: "CUMUL",
}


def _ranges() -> Dict[CategoryId, Tuple[int, int]]:
    ranges = {}
    start = 0
    for category in CategoryId:
        stop = start + CATEGORY_SIZES[category]
        ranges[category] = (start, stop)
        start = stop
    return ranges


CATEGORY_RANGES: Dict[CategoryId, Tuple[int, int]] = _ranges()
FEATURE_COUNT = sum(CATEGORY_SIZES.values())


def feature_names() -> List[str]:
    """列名 `cat<k>_<i>`，i 从 0 开始"""
    return [f"cat{int(category)}_{i}"
            for category in CategoryId
            for i in range(CATEGORY_SIZES[category])]


def category_of(name: str) -> int:
    """从列名解析类别编号"""
    if not name.startswith("cat") or "_" not in name:
        raise ValueError(f"not a feature column name: {name!r}")
    return int(name[3:name.index("_")])


def layout_map() -> Dict:
    """JSON 伴随文件的内容"""
    return {
        "version": LAYOUT_VERSION,
        "total": FEATURE_COUNT,
        "categories": [
            {
                "index": int(category),
                "name": CATEGORY_NAMES[category],
                "start": CATEGORY_RANGES[category][0],
                "stop": CATEGORY_RANGES[category][1],
                "size": CATEGORY_SIZES[category],
            }
            for category in CategoryId
        ],
    }
