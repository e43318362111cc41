# src/stainreg/data/encoders.py
import json
from dataclasses import asdict, is_dataclass
from enum import Enum

import numpy as np


class ResultJSONEncoder(json.JSONEncoder):
    """JSON encoder for result dataclasses, converting numpy values and enums to plain types."""

    def default(self, o):
        if is_dataclass(o) and not isinstance(o, type):
            return asdict(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, Enum):
            return o.value
        return super().default(o)
