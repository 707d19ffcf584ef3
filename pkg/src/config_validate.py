# ============================================================================
#  File: config_validate.py
#  Purpose: JSON-schema validation of experiment files with YAML line numbers
# ============================================================================
# SECTION 1: Imports and Globals
# ============================================================================

import json
import os
from functools import lru_cache
from typing import Any, Dict, Optional, Tuple

import jsonschema
import yaml

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCHEMA_PATH = os.path.join(PROJECT_ROOT, "config", "experiment_schema.json")

# ============================================================================
# SECTION 2: Helpers
# ============================================================================
# Function 2.1: load_schema
# ============================================================================
@lru_cache(maxsize=4)
def load_schema(schema_path: str = SCHEMA_PATH) -> dict:
    with open(schema_path, "r", encoding="utf-8") as f:
        schema = json.load(f)
    jsonschema.Draft7Validator.check_schema(schema)
    return schema

# ============================================================================
# Function 2.2: yaml_line_index
# Purpose: Map every key path of a YAML document to its 1-based line.
# ============================================================================
def yaml_line_index(source_text: str) -> Dict[Tuple[Any, ...], int]:
    index: Dict[Tuple[Any, ...], int] = {}
    try:
        root = yaml.compose(source_text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return index
    if root is None:
        return index

    def walk(node: yaml.Node, path: Tuple[Any, ...]) -> None:
        index[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                child = path + (key_node.value,)
                walk(value_node, child)
                index[child] = key_node.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode):
            for i, item in enumerate(node.value):
                walk(item, path + (i,))

    walk(root, ())
    return index


def _line_for(path: Tuple[Any, ...], index: Dict[Tuple[Any, ...], int]) -> Optional[int]:
    while True:
        if path in index:
            return index[path]
        if not path:
            return None
        path = path[:-1]

# ============================================================================
# SECTION 3: Validation
# ============================================================================
# Function 3.1: get_validation_errors
# ============================================================================
def get_validation_errors(config_data: Any, schema_path: str = SCHEMA_PATH,
                          source_text: Optional[str] = None) -> list[dict]:
    """
    Get detailed validation errors for experiment data.

    Returns:
        list[dict]: one entry per error, sorted by line, each containing
            - path (list): path to the invalid field (e.g. ['grid', 'nx'])
            - message (str): description of the validation error
            - invalid_value (any): the value that failed validation
            - line (int | None): 1-based YAML line when `source_text` is given
    """
    validator = jsonschema.Draft7Validator(load_schema(schema_path))
    index = yaml_line_index(source_text) if source_text else {}
    errors = []
    for error in validator.iter_errors(config_data):
        path = tuple(error.absolute_path)
        errors.append({
            "path": list(path),
            "message": error.message,
            "invalid_value": error.instance,
            "line": _line_for(path, index) if index else None,
        })
    errors.sort(key=lambda e: (e["line"] or 0, [str(p) for p in e["path"]]))
    return errors


def format_errors(errors: list[dict]) -> str:
    lines = []
    for error in errors:
        where = ".".join(str(p) for p in error["path"]) or "<root>"
        prefix = f"line {error['line']}: " if error.get("line") else ""
        lines.append(f"{prefix}{where}: {error['message']}")
    return "\n".join(lines)
