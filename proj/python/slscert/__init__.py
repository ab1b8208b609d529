"""Python wrapper over the slscert core.

The extension speaks JSON strings; this layer encodes dict inputs and decodes
results so callers work with plain Python objects.
"""

import json

from . import _core

__all__ = [
    "version",
    "fit",
    "laplace_report",
    "kappa_profile",
    "comparison_bound",
    "effective_dim",
    "solve_tradeoff",
    "run",
    "compare_runs",
]


def _spec(obj):
    return obj if isinstance(obj, str) else json.dumps(obj)


def version():
    return _core.version()


def fit(model_spec):
    return json.loads(_core.fit(_spec(model_spec)))


def laplace_report(model_spec, x=3.0):
    return json.loads(_core.laplace_report(_spec(model_spec), x))


def kappa_profile(lambdas):
    return json.loads(_core.kappa_profile(list(lambdas)))


def comparison_bound(lambdas_xi, lambdas_eta, a_norm_sq=0.0):
    return _core.comparison_bound(list(lambdas_xi), list(lambdas_eta), a_norm_sq)


def effective_dim(d2_diag, g02_diag, w):
    return _core.effective_dim(list(d2_diag), list(g02_diag), w)


def solve_tradeoff(d2_diag, g02_diag, x, C0):
    return _core.solve_tradeoff(list(d2_diag), list(g02_diag), x, C0)


def run(config):
    exit_code, report = _core.run(_spec(config))
    return exit_code, json.loads(report)


def compare_runs(dir_a, dir_b):
    return json.loads(_core.compare_runs(dir_a, dir_b))
