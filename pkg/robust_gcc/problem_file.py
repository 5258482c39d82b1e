"""
JSON problem files and reports.

A problem file holds

    {"name": ..., "system": {"A", "Bu", "Bw", "Cy", "Dyw", "Cz", "Dzu", "Dzw"},
     "structure": [{"repeats", "rows", "cols"}, ...],
     "cost": {"Q", "R", "N"?},
     "config": {"solver": {...}, "synth": {...}, "sim": {...}}?}

with matrices as row-major nested arrays. NaN and infinities are rejected.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union
import json
import math

import numpy as np

from .exceptions import DimensionError, NotPositiveSemidefiniteError, ProblemFileError
from .model.system import CostFunctional, UncertainSystem, check_compatible
from .model.uncertainty import UncertaintyBlock

SCHEMA_VERSION = 1

SYSTEM_FIELDS = {
    'A': 'a', 'Bu': 'bu', 'Bw': 'bw', 'Cy': 'cy',
    'Dyw': 'dyw', 'Cz': 'cz', 'Dzu': 'dzu', 'Dzw': 'dzw'
}
OPTIONAL_SYSTEM_FIELDS = ('Dyw', 'Dzw')


@dataclass
class ProblemFile:
    name: str
    system: UncertainSystem
    cost: CostFunctional
    config: Dict[str, Dict[str, Any]] = field(default_factory=dict)


def _reject_constant(token: str):
    raise ValueError(f"non-finite number {token} is not allowed")


def _matrix(data: Any, name: str, location: str) -> np.ndarray:
    if not isinstance(data, list) or not all(isinstance(row, list) for row in data):
        raise ProblemFileError("expected a nested array (list of rows)", field=name, location=location)
    widths = {len(row) for row in data}
    if len(widths) > 1:
        raise ProblemFileError(f"rows have unequal lengths {sorted(widths)}", field=name, location=location)
    for i, row in enumerate(data):
        for j, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ProblemFileError(f"entry {v!r} is not a number", field=name, location=f"{location}[{i}][{j}]")
            if not math.isfinite(v):
                raise ProblemFileError("entry is not finite", field=name, location=f"{location}[{i}][{j}]")
    return np.array(data, dtype=float).reshape(len(data), widths.pop() if widths else 0)


def _structure(data: Any) -> tuple:
    if not isinstance(data, list):
        raise ProblemFileError("expected a list of blocks", field="structure", location="structure")
    blocks = []
    for i, entry in enumerate(data):
        location = f"structure[{i}]"
        if not isinstance(entry, dict):
            raise ProblemFileError("expected an object", field="structure", location=location)
        try:
            blocks.append(UncertaintyBlock(
                repeats=entry.get('repeats', 1),
                rows=entry['rows'],
                cols=entry['cols']
            ))
        except KeyError as e:
            raise ProblemFileError(f"missing key {e}", field="structure", location=location) from e
        except (TypeError, ValueError) as e:
            raise ProblemFileError(str(e), field="structure", location=location) from e
    return tuple(blocks)


def parse_problem(doc: Any, source: str = "<input>") -> ProblemFile:
    """Build and check the system and cost described by a decoded JSON document."""
    if not isinstance(doc, dict):
        raise ProblemFileError("top level must be an object", location=source)
    system_doc = doc.get('system')
    if not isinstance(system_doc, dict):
        raise ProblemFileError("missing or malformed object", field="system", location=source)
    cost_doc = doc.get('cost')
    if not isinstance(cost_doc, dict):
        raise ProblemFileError("missing or malformed object", field="cost", location=source)

    matrices = {}
    for key, attr in SYSTEM_FIELDS.items():
        if key not in system_doc:
            if key in OPTIONAL_SYSTEM_FIELDS:
                matrices[attr] = np.zeros((0, 0))
                continue
            raise ProblemFileError("missing matrix", field=key, location="system")
        matrices[attr] = _matrix(system_doc[key], key, f"system.{key}")
    structure = _structure(doc.get('structure', []))
    try:
        system = UncertainSystem(structure=structure, **matrices)
    except (DimensionError, ValueError) as e:
        raise ProblemFileError(str(e), field="system", location=source) from e

    for key in ('Q', 'R'):
        if key not in cost_doc:
            raise ProblemFileError("missing matrix", field=key, location="cost")
    q = _matrix(cost_doc['Q'], 'Q', 'cost.Q')
    r = _matrix(cost_doc['R'], 'R', 'cost.R')
    n = _matrix(cost_doc['N'], 'N', 'cost.N') if 'N' in cost_doc else None
    try:
        cost = CostFunctional.from_weights(q, r, n)
        check_compatible(system, cost)
    except (DimensionError, NotPositiveSemidefiniteError, ValueError) as e:
        raise ProblemFileError(str(e), field="cost", location=source) from e

    config = doc.get('config', {})
    if not isinstance(config, dict):
        raise ProblemFileError("expected an object", field="config", location=source)
    return ProblemFile(name=str(doc.get('name', Path(source).stem)), system=system, cost=cost, config=config)


def load_problem(path: Union[str, Path]) -> ProblemFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ProblemFileError(f"cannot read file: {e.strerror}", location=str(path)) from e
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise ProblemFileError(e.msg, field="json", location=f"{path}:{e.lineno}:{e.colno}") from e
    except ValueError as e:
        raise ProblemFileError(str(e), field="json", location=str(path)) from e
    return parse_problem(doc, str(path))


def problem_to_dict(problem: ProblemFile) -> dict:
    sys, cost = problem.system, problem.cost
    doc = {
        'name': problem.name,
        'system': {key: getattr(sys, attr).tolist() for key, attr in SYSTEM_FIELDS.items()},
        'structure': [b.to_dict() for b in sys.structure],
        'cost': {'Q': cost.q.tolist(), 'R': cost.r.tolist(), 'N': cost.n.tolist()},
    }
    if problem.config:
        doc['config'] = problem.config
    return doc


def save_problem(problem: ProblemFile, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(problem_to_dict(problem), indent=2, allow_nan=False) + "\n")


def load_matrix(path: Union[str, Path], key: Optional[str] = None) -> np.ndarray:
    """
    Read a matrix from a JSON file: either a bare nested array or an object
    holding it under `key` (e.g. a synth report's "gain" or "certificate").
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(), parse_constant=_reject_constant)
    except OSError as e:
        raise ProblemFileError(f"cannot read file: {e.strerror}", location=str(path)) from e
    except ValueError as e:
        raise ProblemFileError(str(e), field="json", location=str(path)) from e
    if isinstance(doc, dict):
        if key is None or key not in doc or doc[key] is None:
            raise ProblemFileError("missing matrix", field=key or "matrix", location=str(path))
        doc = doc[key]
    return _matrix(doc, key or "matrix", str(path))


def write_report(report: dict, path: Optional[Union[str, Path]] = None) -> str:
    """Serialize a report with its schema version; returns the JSON text."""
    doc = _finite({'schema_version': SCHEMA_VERSION, **report})
    text = json.dumps(doc, indent=2, allow_nan=False, default=_json_default)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def _finite(value: Any) -> Any:
    """Replace non-finite floats (diverged runs, unbounded costs) with null."""
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    if isinstance(value, np.ndarray):
        return _finite(value.tolist())
    if isinstance(value, (float, np.floating)) and not math.isfinite(value):
        return None
    return value


def _json_default(value: Any):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")
