"""Pipeline configuration as a flat, diff-friendly key=value surface.

Every tunable of the pipeline lives behind a dotted key (for example
``sgm.p1=0.03``); a config file is just one such assignment per line
with ``#`` comments.  Unknown keys are rejected rather than ignored so
typos cannot silently fall back to defaults.  The single top-level
``seed`` drives every random choice (sampling, forest construction);
there is deliberately no separate forest seed key.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields as dc_fields

from .confidence import SigmaParams
from .errors import ConfigError
from .forest import ForestParams
from .matchers import MatcherParams
from .optimize import CbcaParams, SgmParams
from .postprocess import PostParams


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class PipelineConfig:
    matcher: MatcherParams = field(default_factory=MatcherParams)
    sigma: SigmaParams = field(default_factory=SigmaParams)
    forest: ForestParams = field(default_factory=ForestParams)
    cbca: CbcaParams = field(default_factory=CbcaParams)
    sgm: SgmParams = field(default_factory=SgmParams)
    post: PostParams = field(default_factory=PostParams)
    d_max: int = 64
    seed: int = 0

    _SECTIONS = ("matcher", "sigma", "forest", "cbca", "sgm", "post")
    _TOP_KEYS = {"d_max": int, "seed": int}
    _HIDDEN = {("forest", "seed")}  # driven by the top-level seed

    def validate(self):
        for name in self._SECTIONS:
            getattr(self, name).validate()
        if not isinstance(self.d_max, int) or self.d_max < 0:
            raise ConfigError("d_max must be a non-negative integer")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        return self

    def forest_params(self) -> ForestParams:
        """Forest settings with the pipeline seed filled in."""
        fp = ForestParams(**{f.name: getattr(self.forest, f.name)
                             for f in dc_fields(ForestParams)})
        fp.seed = self.seed
        return fp

    def _key_table(self):
        table = {}
        for section in self._SECTIONS:
            obj = getattr(self, section)
            for f in dc_fields(obj):
                if (section, f.name) in self._HIDDEN:
                    continue
                table[f"{section}.{f.name}"] = (obj, f.name, f.type)
        return table

    def apply_flat(self, flat):
        """Apply string key=value overrides onto this config, then validate."""
        table = self._key_table()
        for key, raw in flat.items():
            raw = str(raw)
            try:
                if key in self._TOP_KEYS:
                    setattr(self, key, int(raw))
                    continue
                if key not in table:
                    raise ConfigError(f"unknown config key {key!r}")
                obj, attr, ftype = table[key]
                current = getattr(obj, attr)
                if isinstance(current, bool):
                    setattr(obj, attr, _parse_bool(raw))
                elif isinstance(current, int):
                    setattr(obj, attr, int(raw))
                else:
                    setattr(obj, attr, float(raw))
            except ValueError:
                raise ConfigError(f"bad value for {key}: {raw!r}")
        return self.validate()

    def to_flat(self):
        """All keys, including defaults, as printable strings."""
        out = {}
        for key, (obj, attr, _) in sorted(self._key_table().items()):
            out[key] = _fmt(getattr(obj, attr))
        for key in self._TOP_KEYS:
            out[key] = _fmt(getattr(self, key))
        return dict(sorted(out.items()))

    @classmethod
    def from_flat(cls, flat) -> "PipelineConfig":
        return cls().apply_flat(flat or {})


def read_config_file(path):
    """Parse a key=value config file into a flat override dict."""
    flat = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
            key, value = stripped.split("=", 1)
            flat[key.strip()] = value.strip()
    return flat


def write_config_file(config: PipelineConfig, path):
    lines = [f"{k}={v}" for k, v in config.to_flat().items()]
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
