from metameta.utils.utils import array_digest, modal_value, parallel_map

__all__ = [
    "array_digest",
    "modal_value",
    "parallel_map",
]
