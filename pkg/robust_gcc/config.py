import dataclasses
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Mapping

from .exceptions import ProblemFileError
from .sdp.solver import SolverOptions
from .simulation.montecarlo import SimConfig
from .synthesis.result import SynthesisOptions

TRUE_VALUES = ('true', '1', 'yes', 'on')
FALSE_VALUES = ('false', '0', 'no', 'off')


class Config:
    """Process-wide defaults taken from the environment."""

    LOG_LEVEL = os.environ.get('ROBUST_GCC_LOG_LEVEL', 'INFO')
    SOLVER = os.environ.get('ROBUST_GCC_SOLVER', 'reference')
    WORKERS = int(os.environ.get('ROBUST_GCC_WORKERS', '1'))


def _coerce(value: Any, target: Any, key: str) -> Any:
    if target is bool:
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in TRUE_VALUES:
            return True
        if text in FALSE_VALUES:
            return False
        raise ValueError(f"expected a boolean, got {value!r}")
    if target is int:
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ValueError(f"expected an integer, got {value!r}")
        return int(value)
    if target is float:
        if isinstance(value, bool):
            raise ValueError(f"expected a number, got {value!r}")
        return float(value)
    if target is str:
        return str(value)
    # Optional[Tuple[float, ...]]: a list or a comma-separated string
    if isinstance(value, str):
        return tuple(float(v) for v in value.split(',') if v.strip())
    return tuple(float(v) for v in value)


@dataclass
class GccSettings:
    """Solver, synthesis and simulation options behind one override surface."""
    solver: SolverOptions = field(default_factory=lambda: SolverOptions(backend=Config.SOLVER))
    synth: SynthesisOptions = field(default_factory=SynthesisOptions)
    sim: SimConfig = field(default_factory=lambda: SimConfig(workers=Config.WORKERS))

    SECTIONS = ('solver', 'synth', 'sim')

    def _update(self, section: str, values: Mapping[str, Any], location: str) -> None:
        if section not in self.SECTIONS:
            raise ProblemFileError(
                f"unknown section (expected one of {', '.join(self.SECTIONS)})",
                field=section, location=location
            )
        current = getattr(self, section)
        types = {f.name: f.type for f in dataclasses.fields(current)}
        changes = {}
        for key, value in values.items():
            name = f"{section}.{key}"
            if key not in types:
                raise ProblemFileError("unknown option", field=name, location=location)
            try:
                changes[key] = _coerce(value, types[key], name)
            except (TypeError, ValueError) as e:
                raise ProblemFileError(str(e), field=name, location=location) from e
        try:
            setattr(self, section, dataclasses.replace(current, **changes))
        except ValueError as e:
            raise ProblemFileError(str(e), field=section, location=location) from e

    def apply_mapping(self, mapping: Mapping[str, Mapping[str, Any]], location: str = "config") -> 'GccSettings':
        """Merge a nested {section: {key: value}} mapping, e.g. a problem file's config object."""
        for section, values in mapping.items():
            if not isinstance(values, Mapping):
                raise ProblemFileError("expected an object", field=section, location=location)
            self._update(section, values, f"{location}.{section}")
        return self

    def apply_overrides(self, overrides: Iterable[str]) -> 'GccSettings':
        """Apply 'section.key=value' strings in order."""
        for item in overrides:
            head, sep, value = item.partition('=')
            section, dot, key = head.strip().partition('.')
            if not sep or not dot or not key:
                raise ProblemFileError("expected section.key=value", field=item, location="--opt")
            self._update(section, {key: value.strip()}, "--opt")
        return self

    def to_dict(self) -> Dict[str, dict]:
        return {name: dataclasses.asdict(getattr(self, name)) for name in self.SECTIONS}
