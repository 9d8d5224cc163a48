"""Experiment configuration: line-oriented ``key = value`` text.

Blank lines and ``#`` comments are ignored.  Keys::

    kind       verify-coupling | verify-lpp | lln | ldp-tails | relation |
               current | variance-curve | clt                      (required)
    kernel     displacement:rate pairs, e.g. ``1:1.0`` or ``1:0.5,-1:0.5``
               (default TASEP)
    rho        density in [0, 1]                                  (default 0.25)
    t          horizon > 0                     (required unless ``times`` is given)
    replicas   replica count >= 1                                 (required)
    seed       master seed in [0, 2**64)                          (required)
    margin     ``auto`` or extra sites of window padding per side   (default auto)
    times      comma-separated horizons for multi-time kinds
    epsilon    tail half-width for ldp-tails                      (default 0.3)
    observe    observation half-width for verify-coupling         (default 50)
    samples    sample times per run for verify-coupling           (default 10)
    size       largest grid side for verify-lpp                   (default 30)
    shape_n    corner size for the verify-lpp shape check         (default 0: skip)
    shape_trials  trials for the shape check                      (default 50)
    expect     bounded | growth for variance-curve (default from the drift)
    output     file stem for results                              (default kind)
"""

from dataclasses import dataclass, field

from .kernel import JumpKernel, KernelError

KINDS = (
    "verify-coupling", "verify-lpp", "lln", "ldp-tails", "relation",
    "current", "variance-curve", "clt",
)

_KEYS = {
    "kind", "kernel", "rho", "t", "replicas", "seed", "margin", "times", "epsilon",
    "observe", "samples", "size", "shape_n", "shape_trials", "expect", "output",
}


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class ExperimentConfig:
    kind: str
    kernel: JumpKernel
    rho: float
    t: float
    replicas: int
    seed: int
    margin: object = "auto"
    times: tuple = ()
    epsilon: float = 0.3
    observe: int = 50
    samples: int = 10
    size: int = 30
    shape_n: int = 0
    shape_trials: int = 50
    expect: str = None
    output: str = None
    text: str = field(default="", repr=False)

    def normalized(self):
        """Canonical ``key = value`` text; parses back to an equal config."""
        rows = [
            ("kind", self.kind), ("kernel", self.kernel.spec()), ("rho", repr(self.rho)),
        ]
        if self.t is not None:
            rows.append(("t", repr(self.t)))
        rows += [("replicas", self.replicas), ("seed", self.seed), ("margin", self.margin)]
        if self.times:
            rows.append(("times", ",".join(repr(x) for x in self.times)))
        rows += [
            ("epsilon", repr(self.epsilon)), ("observe", self.observe),
            ("samples", self.samples), ("size", self.size), ("shape_n", self.shape_n),
            ("shape_trials", self.shape_trials),
        ]
        if self.expect:
            rows.append(("expect", self.expect))
        rows.append(("output", self.stem))
        return "".join(f"{k} = {v}\n" for k, v in rows)

    @property
    def stem(self):
        return self.output or self.kind

    def echo(self):
        d = {
            "kind": self.kind, "kernel": self.kernel.spec(), "rho": self.rho, "t": self.t,
            "replicas": self.replicas, "seed": self.seed, "margin": self.margin,
            "times": list(self.times), "epsilon": self.epsilon, "observe": self.observe,
            "samples": self.samples, "size": self.size, "shape_n": self.shape_n,
            "shape_trials": self.shape_trials, "expect": self.expect, "output": self.stem,
        }
        return d


def _split(text):
    pairs = {}
    problems = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {n}: expected 'key = value'")
            continue
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in _KEYS:
            problems.append(f"line {n}: unknown key {k!r}")
        elif k in pairs:
            problems.append(f"line {n}: key {k!r} given twice")
        else:
            pairs[k] = v
    return pairs, problems


def parse_config(text):
    """Parse and validate; raises :class:`ConfigError` listing every problem."""
    pairs, problems = _split(text)

    def get(key, conv, default=None, required=False, check=None, msg=""):
        if key not in pairs:
            if required:
                problems.append(f"{key}: required")
            return default
        try:
            v = conv(pairs[key])
        except (ValueError, KernelError) as e:
            problems.append(f"{key}: {e}" if isinstance(e, KernelError) else f"{key}: cannot parse {pairs[key]!r}")
            return default
        if check is not None and not check(v):
            problems.append(f"{key}: {msg} (got {pairs[key]})")
            return default
        return v

    kind = get("kind", str, required=True, check=lambda v: v in KINDS, msg=f"must be one of {', '.join(KINDS)}")
    kernel = get("kernel", JumpKernel.parse, JumpKernel.tasep())
    rho = get("rho", float, 0.25, check=lambda v: 0.0 <= v <= 1.0, msg="must lie in [0, 1]")
    t = get("t", float, required="times" not in pairs and kind != "verify-lpp", check=lambda v: v > 0, msg="must be positive")
    replicas = get("replicas", int, required=True, check=lambda v: v >= 1, msg="must be >= 1")
    seed = get("seed", int, required=True, check=lambda v: 0 <= v < 1 << 64, msg="must lie in [0, 2**64)")
    margin = get(
        "margin", lambda v: v if v == "auto" else int(v), "auto",
        check=lambda v: v == "auto" or v >= 0, msg="must be 'auto' or a non-negative integer",
    )
    times = get(
        "times", lambda v: tuple(float(x) for x in v.split(",")), (),
        check=lambda v: len(v) > 0 and all(x > 0 for x in v), msg="must be positive numbers",
    )
    epsilon = get("epsilon", float, 0.3, check=lambda v: v > 0, msg="must be positive")
    observe = get("observe", int, 50, check=lambda v: v >= 1, msg="must be >= 1")
    samples = get("samples", int, 10, check=lambda v: v >= 1, msg="must be >= 1")
    size = get("size", int, 30, check=lambda v: 2 <= v <= 200, msg="must lie in [2, 200]")
    shape_n = get("shape_n", int, 0, check=lambda v: v >= 0, msg="must be >= 0")
    shape_trials = get("shape_trials", int, 50, check=lambda v: v >= 1, msg="must be >= 1")
    expect = get("expect", str, None, check=lambda v: v in ("bounded", "growth"), msg="must be bounded or growth")
    output = get("output", str, None, check=lambda v: v and "/" not in v, msg="must be a plain file stem")

    if kind in ("verify-coupling", "current") and kernel is not None and not kernel.is_tasep():
        problems.append(f"kernel: {kind} needs the TASEP kernel 1:1.0")
    if kind in ("ldp-tails", "variance-curve") and not times:
        problems.append(f"times: required for {kind}")
    if t is None and times:
        t = max(times)
    if kind in ("lln", "ldp-tails") and rho is not None and not 0 < rho < 1:
        problems.append("rho: must lie strictly inside (0, 1) for second-class runs")
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(
        kind, kernel, rho, t, replicas, seed, margin, times, epsilon, observe, samples,
        size, shape_n, shape_trials, expect, output, text,
    )


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())
