from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from metameta.errors import FeatureBankFormatError
from metameta.logger import get_logger
from metameta.problems.models import ClassBank
from metameta.types import SplitTag

logger = get_logger(__name__)

MAGIC = b"MMFB"
VERSION = 1
_HEADER = struct.Struct("<4sIII")
_CLASS_HEADER = struct.Struct("<II")

PathLike = Union[str, Path]


def sidecar_path(path: PathLike) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".meta.json")


def encode_feature_bank(bank: ClassBank) -> bytes:
    if bank.num_classes == 0:
        raise FeatureBankFormatError("refusing to write a bank without classes")
    parts: List[bytes] = [_HEADER.pack(MAGIC, VERSION, bank.feature_dim, bank.num_classes)]
    for cid, feats in bank.classes:
        parts.append(_CLASS_HEADER.pack(cid, feats.shape[0]))
        parts.append(np.ascontiguousarray(feats, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_feature_bank(data: bytes, split_tag: SplitTag = SplitTag.META_TRAIN) -> ClassBank:
    if len(data) < _HEADER.size:
        raise FeatureBankFormatError("truncated header", offset=len(data))
    magic, version, feature_dim, num_classes = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FeatureBankFormatError(f"bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise FeatureBankFormatError(f"unsupported version {version}", offset=4)
    if feature_dim == 0:
        raise FeatureBankFormatError("feature_dim must be positive", offset=8)
    if num_classes == 0:
        raise FeatureBankFormatError("file declares no classes", offset=12)

    offset = _HEADER.size
    classes: List[Tuple[int, np.ndarray]] = []
    seen = set()
    for _ in range(num_classes):
        if offset + _CLASS_HEADER.size > len(data):
            raise FeatureBankFormatError("truncated class header", offset=offset)
        cid, n = _CLASS_HEADER.unpack_from(data, offset)
        if cid in seen:
            raise FeatureBankFormatError(f"duplicate class id {cid}", offset=offset)
        if n == 0:
            raise FeatureBankFormatError(f"class {cid} has no examples", offset=offset + 4)
        seen.add(cid)
        offset += _CLASS_HEADER.size
        nbytes = n * feature_dim * 4
        if offset + nbytes > len(data):
            raise FeatureBankFormatError(
                f"class {cid}: expected {nbytes} bytes of features, "
                f"{len(data) - offset} remain",
                offset=offset,
            )
        feats = np.frombuffer(data, dtype="<f4", count=n * feature_dim, offset=offset)
        feats = feats.reshape(n, feature_dim).astype(np.float64)
        if not np.all(np.isfinite(feats)):
            raise FeatureBankFormatError(f"class {cid} has non-finite features", offset=offset)
        classes.append((cid, feats))
        offset += nbytes

    if offset != len(data):
        raise FeatureBankFormatError(
            f"{len(data) - offset} trailing bytes after the last class", offset=offset
        )
    return ClassBank(feature_dim=feature_dim, classes=tuple(classes), split_tag=split_tag)


def save_feature_bank(bank: ClassBank, path: PathLike) -> None:
    p = Path(path)
    p.write_bytes(encode_feature_bank(bank))
    if bank.names:
        names = {str(cid): name for cid, name in sorted(bank.names.items())}
        sidecar_path(p).write_text(json.dumps(names, indent=2) + "\n", encoding="utf-8")
    logger.info("wrote %d classes to %s", bank.num_classes, p)


def _load_names(path: Path) -> Dict[int, str]:
    side = sidecar_path(path)
    if not side.exists():
        return {}
    try:
        raw = json.loads(side.read_text(encoding="utf-8"))
        return {int(k): str(v) for k, v in raw.items()}
    except (ValueError, AttributeError) as e:
        raise FeatureBankFormatError(f"unreadable sidecar {side}: {e}") from e


def load_feature_bank(path: PathLike, split_tag: SplitTag = SplitTag.META_TRAIN) -> ClassBank:
    p = Path(path)
    bank = decode_feature_bank(p.read_bytes(), split_tag)
    names = _load_names(p)
    if names:
        unknown = sorted(set(names) - set(bank.class_ids))
        if unknown:
            raise FeatureBankFormatError(f"sidecar names unknown class ids {unknown[:5]!r}")
        bank = ClassBank(
            feature_dim=bank.feature_dim,
            classes=bank.classes,
            split_tag=split_tag,
            names=names,
        )
    return bank
