import copy
import hashlib
import json
import os
from dataclasses import dataclass, field, replace

from jsonschema import Draft7Validator

from conic_solver import ToleranceSet
from coordinator import ConfigError, SlrConfig, SLR, SUBGRADIENT
from milp_solver import BnBConfig


COMMANDS = ('validate', 'solve', 'coordinate', 'baseline', 'scale-study',
            'report', 'generate')

SCHEMA_PATH = os.path.join(
    os.path.dirname(os.path.abspath(__file__)), 'schemas',
    'tdcoord-config.json')


def load_schema(path=SCHEMA_PATH):
    with open(path, encoding='utf-8') as f:
        return json.load(f)


def schema_defaults(schema):
    """Materialize every default of an object schema, nested objects
    included."""
    values = {}
    for key, prop in schema.get('properties', {}).items():
        if prop.get('type') == 'object' and 'properties' in prop:
            values[key] = schema_defaults(prop)
        elif 'default' in prop:
            values[key] = copy.deepcopy(prop['default'])
    return values


def merge(base, overlay):
    """Recursive dict merge, overlay wins."""
    result = copy.deepcopy(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(result.get(key), dict) \
                and key != 'lambda0':
            result[key] = merge(result[key], value)
        else:
            result[key] = copy.deepcopy(value)
    return result


def parse_override(text):
    """Split 'dotted.key=value' into (['dotted', 'key'], value).

    Values are parsed as JSON, otherwise kept as string.
    """
    key, sep, raw = text.partition('=')
    if not sep or not key.strip():
        raise ConfigError("Override '%s' is not of the form key=value" % text)
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    return key.strip().split('.'), value


def apply_override(values, path, value):
    target = values
    for part in path[:-1]:
        nested = target.get(part)
        if not isinstance(nested, dict):
            nested = {}
            target[part] = nested
        target = nested
    target[path[-1]] = value


def schema_errors(values, schema):
    """Validation messages prefixed with the JSON path of the offending
    value."""
    validator = Draft7Validator(schema)
    messages = []
    for error in sorted(validator.iter_errors(values),
                        key=lambda e: list(e.absolute_path)):
        path = "/".join(str(p) for p in error.absolute_path) or "(root)"
        messages.append("%s: %s" % (path, error.message))
    return messages


@dataclass
class RunConfig:
    """Resolved settings of one command invocation."""
    command: str
    case_path: str = None
    output_dir: str = 'out'
    values: dict = field(default_factory=dict)

    def check(self):
        if self.command not in COMMANDS:
            raise ConfigError("Unknown command '%s'" % self.command)
        if self.case_path is not None and not self.case_path:
            raise ConfigError("Case path must not be empty")
        if not self.output_dir:
            raise ConfigError("Output directory must not be empty")

    @property
    def seed(self):
        return self.values['seed']

    def tolerances(self):
        return ToleranceSet(**self.values['tolerance'])

    def bnb_config(self):
        return BnBConfig(tolerances=self.tolerances(), **self.values['bnb'])

    def slr_config(self):
        slr = dict(self.values['slr'])
        cfg = SlrConfig(
            direction_patience=self.values['direction_patience'],
            workers=self.values['workers'],
            gap_interval=self.values['gap_interval'],
            exchange_tie_break=self.values['exchange_tie_break'],
            pricing_mode=self.values['pricing_mode'],
            method=SLR, **slr)
        cfg.check()
        return cfg

    def subgradient_config(self):
        sub = self.values['subgradient']
        cfg = replace(self.slr_config(), s0=sub['s0'],
                      max_iters=sub['max_iters'], c0=0.0,
                      method=SUBGRADIENT)
        cfg.check()
        return cfg

    def config_hash(self):
        """Digest of the command, case file content and resolved values."""
        digest = hashlib.sha256()
        digest.update(self.command.encode('utf-8'))
        if self.case_path and os.path.isfile(self.case_path):
            with open(self.case_path, 'rb') as f:
                digest.update(f.read())
        digest.update(json.dumps(self.values, sort_keys=True).encode('utf-8'))
        return digest.hexdigest()

    def run_dir(self):
        return os.path.join(self.output_dir, "%s-%s" % (
            self.command, self.config_hash()[:12]))

    def as_dict(self):
        return {
            'command': self.command,
            'case_path': self.case_path,
            'output_dir': self.output_dir,
            'config': self.values
        }


def resolve(command, case_path=None, output_dir='out', config_file=None,
            overrides=(), schema=None):
    """Build a RunConfig from schema defaults, an optional JSON config file
    and dotted overrides, in that order.

    :param str command: CLI command
    :param str case_path: Case file
    :param str output_dir: Output root
    :param str config_file: Optional JSON config file
    :param list overrides: 'dotted.key=value' strings
    """
    schema = schema or load_schema()
    values = schema_defaults(schema)
    if config_file:
        try:
            with open(config_file, encoding='utf-8') as f:
                loaded = json.load(f)
        except (OSError, ValueError) as e:
            raise ConfigError("Cannot read config '%s': %s" %
                              (config_file, e))
        if not isinstance(loaded, dict):
            raise ConfigError("Config '%s' is not a JSON object" %
                              config_file)
        loaded.pop('$schema', None)
        values = merge(values, loaded)
    for text in overrides:
        path, value = parse_override(text)
        apply_override(values, path, value)

    errors = schema_errors(values, schema)
    if errors:
        raise ConfigError("; ".join(errors))
    cfg = RunConfig(command=command, case_path=case_path,
                    output_dir=output_dir, values=values)
    cfg.check()
    return cfg
