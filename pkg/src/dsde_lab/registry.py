"""Named builtin problems used by the command line front end."""
from __future__ import annotations

import numpy as np

from .bdsdep import BackwardProblem
from .coeffs import linear_system, zero_system
from .errors import InvalidArgumentError
from .experiments import QuadraticHamiltonian, build_hamiltonian_system
from .randomness import NO_MARKS, MarkSpace
from .spdie import markovian_system

MONOTONE_LINEAR = dict(f_P=-1.0, f_c=1.0, g_c=0.3, h_c=0.2, F_X=-1.0, G_Y=-1.0, G_c=0.2, Phi_X=1.0)


def marks_from(rates) -> MarkSpace:
    rates = list(rates or [])
    return MarkSpace(tuple(f"z{j + 1}" for j in range(len(rates))), tuple(rates)) if rates else NO_MARKS


def _pop(params: dict, key, default):
    return params.pop(key, default)


def _done(name, params):
    if params:
        raise InvalidArgumentError(f"unknown parameters for problem {name!r}: {sorted(params)}")


# ---------------------------------------------------------------------------
# coupled systems


def _zero(p):
    n, d, l = _pop(p, "n", 1), _pop(p, "d", 0), _pop(p, "l", 0)
    marks = marks_from(_pop(p, "rates", []))
    return zero_system(n, d, l, marks)


def _linear(p):
    n, d, l = _pop(p, "n", 1), _pop(p, "d", 1), _pop(p, "l", 1)
    marks = marks_from(_pop(p, "rates", [1.0]))
    coef = dict(MONOTONE_LINEAR)
    coef.update(_pop(p, "coef", {}))
    consts = {k: _pop(p, k, v) for k, v in (("mu1", 1.0), ("mu2", 0.0), ("beta1", 1.0), ("beta2", 0.0))}
    return linear_system(n, d, l, marks, coef, **consts)


def _hamiltonian(p):
    d, l = _pop(p, "d", 1), _pop(p, "l", 1)
    marks = marks_from(_pop(p, "rates", [1.0]))
    fields = QuadraticHamiltonian.__dataclass_fields__
    ham = QuadraticHamiltonian(**{k: p.pop(k) for k in list(p) if k in fields})
    return build_hamiltonian_system(ham, d, l, marks), ham


SYSTEMS = {
    "zero": _zero,
    "linear": _linear,
    "monotone_linear": _linear,
    "hamiltonian": lambda p: _hamiltonian(p)[0],
}


def build_system(name: str, params: dict):
    if name not in SYSTEMS:
        raise InvalidArgumentError(f"unknown coupled problem {name!r}; choose from {sorted(SYSTEMS)}")
    p = dict(params)
    sys = SYSTEMS[name](p)
    _done(name, p)
    return sys


def build_hamiltonian(params: dict):
    p = dict(params)
    out = _hamiltonian(p)
    _done("hamiltonian", p)
    return out


# ---------------------------------------------------------------------------
# Markovian (field) problems


def _phi(name: str):
    table = {"identity": lambda x: x, "square": lambda x: x**2, "sin": np.sin, "cos": np.cos}
    if name not in table:
        raise InvalidArgumentError(f"unknown terminal function {name!r}; choose from {sorted(table)}")
    return table[name]


def _heat(p):
    sigma = _pop(p, "sigma", 1.0)
    phi = _phi(_pop(p, "phi", "square"))
    return markovian_system(g=lambda t, x, q: sigma * np.ones(x.shape + (1,)), Phi=phi, name="heat")


def _transport(p):
    speed = _pop(p, "speed", 1.0)
    phi = _phi(_pop(p, "phi", "sin"))
    return markovian_system(f=lambda t, x, q: speed * np.ones_like(x), d=0, Phi=phi, name="transport")


def _jump(p):
    c = _pop(p, "c", 0.5)
    rate = _pop(p, "rate", 1.0)
    phi = _phi(_pop(p, "phi", "square"))
    return markovian_system(h=lambda t, x: c * np.ones(x.shape + (1,)), d=0,
                            marks=MarkSpace.single(rate), Phi=phi, name="jump")


FIELDS = {"heat": _heat, "transport": _transport, "jump": _jump}


def build_field_problem(name: str, params: dict):
    if name not in FIELDS:
        raise InvalidArgumentError(f"unknown field problem {name!r}; choose from {sorted(FIELDS)}")
    p = dict(params)
    sys = FIELDS[name](p)
    _done(name, p)
    return sys


# ---------------------------------------------------------------------------
# backward problems (closed-form examples)


def _bsde_w(p):
    return BackwardProblem(terminal=lambda nz: np.broadcast_to(nz.W_path()[:, -1][None],
                                                               (nz.replicates, nz.paths, 1)), m=1), 1, 0


def _bsde_b(p):
    c = _pop(p, "c", 1.0)
    return BackwardProblem(terminal=0.0, m=1,
                           driver_g=lambda t, P, Q, K: np.full(P.shape + (1,), c)), 0, 1


def _bsde_jump(p):
    return BackwardProblem(terminal=lambda nz: np.broadcast_to(nz.Ntilde_path()[:, -1][None],
                                                               (nz.replicates, nz.paths, 1)), m=1), 0, 0


def _bsde_ode(p):
    a = _pop(p, "a", 0.5)
    return BackwardProblem(terminal=1.0, m=1, driver_f=lambda t, P, Q, K: a * P), 0, 0


BACKWARD = {"martingale_w": _bsde_w, "backward_b": _bsde_b, "compensated_jump": _bsde_jump,
            "linear_ode": _bsde_ode}


def build_backward(name: str, params: dict):
    """Return (problem, d, l, marks)."""
    if name not in BACKWARD:
        raise InvalidArgumentError(f"unknown backward problem {name!r}; choose from {sorted(BACKWARD)}")
    p = dict(params)
    rates = _pop(p, "rates", [1.0] if name == "compensated_jump" else [])
    prob, d, l = BACKWARD[name](p)
    _done(name, p)
    marks = marks_from(rates)
    prob.marks = marks
    return prob, d, l, marks
