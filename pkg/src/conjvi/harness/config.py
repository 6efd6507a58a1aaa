"""Line-oriented key=value run configuration."""


class ConfigError(ValueError):
    """Unknown key, bad value, or missing requirement."""


_SCHEMA = {
    "method": str,        # cvi | cvi-exact | cvi-ds | meanfield | sgd | adam
    "model": str,         # blr | gpc | kalman | gamma
    "data_path": str,
    "test_split": str,    # fraction in (0,1) or an explicit training count
    "standardize": bool,
    "delta": float,       # weight-prior precision (benchmark-table convention)
    "sigma2": float,
    "a": float,
    "b": float,
    "log_sigma_f": float,
    "log_l": float,
    "step_w": float,      # beta = w / (1 + w)
    "step_beta": float,   # direct beta, overrides step_w
    "mc_samples": int,
    "minibatch": int,
    "max_iters": int,
    "seed": int,
    "out_path": str,
}

_REQUIRED = ("method", "model")

_METHODS = ("cvi", "cvi-exact", "cvi-ds", "meanfield", "sgd", "adam")
_MODELS = ("blr", "gpc", "kalman", "gamma")


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError("bad boolean %r" % text)


def parse_config(text):
    """Parse config text into a dict; unknown keys are errors."""
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError("line %d: expected key=value, got %r" % (lineno, raw))
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA:
            raise ConfigError("line %d: unknown key %r" % (lineno, key))
        if key in cfg:
            raise ConfigError("line %d: duplicate key %r" % (lineno, key))
        kind = _SCHEMA[key]
        try:
            if kind is bool:
                cfg[key] = _parse_bool(value)
            else:
                cfg[key] = kind(value)
        except ConfigError:
            raise
        except ValueError:
            raise ConfigError("line %d: bad value %r for %s" % (lineno, value, key))
    for key in _REQUIRED:
        if key not in cfg:
            raise ConfigError("missing required key %r" % key)
    if cfg["method"] not in _METHODS:
        raise ConfigError("unknown method %r" % cfg["method"])
    if cfg["model"] not in _MODELS:
        raise ConfigError("unknown model %r" % cfg["model"])
    if "test_split" in cfg:
        try:
            value = float(cfg["test_split"])
        except ValueError:
            raise ConfigError("bad test_split %r" % cfg["test_split"])
        cfg["test_split"] = value if 0 < value < 1 else int(value)
    return cfg


def read_config(path):
    with open(path) as fh:
        return parse_config(fh.read())
