"""
pmfテーブルファイルの読み込み

    # コメント
    (X,1,0,2) (Y,1,1,2) (U,1,1,2) (Xhat,1,0,2)
    0,0,0,0;0.5
    1,1,1,1;0.5
    @sd 0,1;1.0

軸宣言はデータ行より前に置く。列挙されない結果の確率は0。
@sd 行は歪み表 sd(x, x̂) を与える（省略時はハミング歪み）。
"""
import logging
import re
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np

from ..errors import CeoError, SpecParseError
from .pmf import (
    OBSERVATION, OBSERVER_RECONSTRUCTION, RECONSTRUCTION, SOURCE, Axis, FinitePmf,
)

logger = logging.getLogger(__name__)

_AXIS = re.compile(r"\(\s*([^,()\s]+)\s*,\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*\)")
FILE_TOL = 1e-9


class PmfSpec(NamedTuple):
    joint: FinitePmf
    distortion: Optional[List[List[float]]]


class _Reader:
    """1ファイル分の構文解析状態"""

    def __init__(self, filename: str):
        self.filename = filename
        self.axes: List[Axis] = []
        self.table: Dict[Tuple[int, ...], float] = {}
        self.sd: Dict[Tuple[int, int], float] = {}
        self.line = 0

    def error(self, message: str) -> SpecParseError:
        return SpecParseError(message, filename=self.filename, line=self.line)

    def feed(self, raw: str) -> None:
        text = raw.split("#", 1)[0].strip()
        if not text:
            return
        if text.startswith("("):
            self._axes(text)
        elif text.startswith("@sd"):
            self._distortion(text[3:].strip())
        else:
            self._outcome(text)

    def _axes(self, text: str) -> None:
        if self.table:
            raise self.error("axis declarations must come before data lines")
        found = _AXIS.findall(text)
        if not found or _AXIS.sub("", text).strip():
            raise self.error(f"malformed axis declaration: {text!r}")
        for name, time, observer, size in found:
            try:
                axis = Axis(name=name, time=int(time), observer=int(observer), size=int(size))
            except ValueError as e:
                raise self.error(f"invalid axis ({name},{time},{observer},{size}): {e}") from e
            if any(a.key == axis.key for a in self.axes):
                raise self.error(f"duplicate axis {axis.label}")
            self.axes.append(axis)

    def _split(self, text: str) -> Tuple[List[int], float]:
        if text.count(";") != 1:
            raise self.error(f"expected 'values;probability', got {text!r}")
        values, prob = text.split(";")
        try:
            ints = [int(v) for v in values.split(",")]
            p = float(prob)
        except ValueError as e:
            raise self.error(f"cannot parse {text!r}: {e}") from e
        return ints, p

    def _outcome(self, text: str) -> None:
        if not self.axes:
            raise self.error("data line before any axis declaration")
        values, p = self._split(text)
        if len(values) != len(self.axes):
            raise self.error(f"expected {len(self.axes)} values, got {len(values)}")
        for v, a in zip(values, self.axes):
            if not 0 <= v < a.size:
                raise self.error(f"value {v} outside the alphabet of {a.label} (size {a.size})")
        if not p >= 0.0:
            raise self.error(f"negative probability {p}")
        key = tuple(values)
        if key in self.table:
            raise self.error(f"duplicate outcome {values}")
        self.table[key] = p

    def _distortion(self, text: str) -> None:
        values, value = self._split(text)
        if len(values) != 2:
            raise self.error("@sd lines take exactly two values: x,xhat;value")
        if (values[0], values[1]) in self.sd:
            raise self.error(f"duplicate distortion entry {values}")
        self.sd[(values[0], values[1])] = value

    def _alphabet(self, *names: str) -> Optional[int]:
        for name in names:
            for a in self.axes:
                if a.name == name:
                    return a.size
        return None

    def finish(self) -> PmfSpec:
        if not self.axes:
            raise self.error("no axis declarations")
        if not self.table:
            raise self.error("no data lines")
        try:
            joint = FinitePmf.from_outcomes(self.axes, self.table, tol=FILE_TOL)
        except CeoError as e:
            raise self.error(str(e)) from e
        # ファイル上の丸めを吸収して正規化
        joint = FinitePmf(joint.axes, joint.probs / joint.probs.sum()).canonical()

        distortion = None
        if self.sd:
            n_src = self._alphabet(SOURCE, OBSERVATION)
            n_rec = self._alphabet(RECONSTRUCTION, OBSERVER_RECONSTRUCTION)
            if n_src is None or n_rec is None:
                raise self.error("@sd lines need source and reconstruction axes")
            table = (np.arange(n_src)[:, None] != np.arange(n_rec)[None, :]).astype(float)
            for (x, xhat), value in self.sd.items():
                if not (0 <= x < n_src and 0 <= xhat < n_rec):
                    raise self.error(f"distortion entry ({x},{xhat}) outside the alphabets")
                table[x, xhat] = value
            distortion = table.tolist()
        logger.info(f"loaded pmf {self.filename}: {len(self.axes)} axes, {joint.support_size} outcomes")
        return PmfSpec(joint=joint, distortion=distortion)


def parse_pmf(text: str, filename: str = "<string>") -> PmfSpec:
    """テキストから PmfSpec を作る"""
    reader = _Reader(filename)
    for number, raw in enumerate(text.splitlines(), start=1):
        reader.line = number
        reader.feed(raw)
    return reader.finish()


def load_pmf(path: Union[str, Path]) -> PmfSpec:
    """ファイルから PmfSpec を読む"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise SpecParseError(f"cannot read file: {e}", filename=str(path), line=0) from e
    return parse_pmf(text, filename=str(path))
