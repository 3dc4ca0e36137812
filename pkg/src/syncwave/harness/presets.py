"""Named experiment configurations.

Each preset is a plain dict in the TOML schema of :mod:`.config`, so it can be
dumped, overridden with dotted keys and validated like a user file.
"""

from __future__ import annotations

import copy

from ..errors import ConfigurationError


def _random(seed, amplitude, decay=1.0):
    return {"kind": "random", "seed": seed, "amplitude": amplitude, "decay": decay}


def _sg_pair(nu=0.1, gamma=0.5, lambda_s=1.0, f=0.3):
    sub = {
        "nu": nu,
        "gamma": gamma,
        "nonlinearity": {"kind": "sine_gordon", "lambda_s": lambda_s},
        "forcing": {"kind": "constant", "value": f},
    }
    return [copy.deepcopy(sub), copy.deepcopy(sub)]


_INTERVAL = {"geometry": "interval", "boundary": "dirichlet", "operator": "laplacian", "modes": 32}

# the identical sine-Gordon pair below is bistable (nu * lambda_1 < lambda_s):
# uncoupled copies started from these seeds settle in different wells
_E2 = {
    "description": "identical sine-Gordon pair, K = identity; exponential synchronization",
    "domain": dict(_INTERVAL),
    "subsystems": _sg_pair(),
    "coupling": {"topology": "pair", "kappa": 25.0, "alpha": 0.0, "operator": {"kind": "identity"}},
    "integration": {"dt": 0.01, "T": 100.0, "sample_every": 10},
    "initial": [{"position": _random(13, 3.0)}, {"position": _random(14, 3.0)}],
    "analysis": {"fit_rate": True},
}

PRESETS: dict[str, dict] = {
    "E1": {
        "description": "non-identical pair (nu = 1, 2) on the square with a point load; sync ~ 1/kappa",
        "domain": {"geometry": "rectangle", "boundary": "dirichlet", "operator": "laplacian", "modes": 300},
        "subsystems": [
            {"nu": nu, "gamma": 2.0, "nonlinearity": {"kind": "sine_gordon", "lambda_s": 0.5},
             "forcing": {"kind": "point", "amplitude": 3.0, "x": [1.0471975511965976, 1.413716694115407]}}
            for nu in (1.0, 2.0)
        ],
        "coupling": {"topology": "pair", "kappa": 40.0, "alpha": 0.0, "operator": {"kind": "identity"}},
        "integration": {"dt": 0.02, "T": 30.0, "sample_every": 5},
        "initial": [{}, {}],
    },
    "E2": _E2,
    "E3": {
        "description": "Neumann sine-Gordon pair without mass term; w = (u - v)/2 decay",
        "domain": {"geometry": "interval", "boundary": "neumann", "operator": "laplacian", "modes": 32},
        "subsystems": _sg_pair(nu=1.0, gamma=0.5, lambda_s=1.0, f=0.2),
        "coupling": {"topology": "pair", "kappa": 2.0, "operator": {"kind": "identity"}},
        "integration": {"dt": 0.01, "T": 60.0, "sample_every": 10},
        "initial": [{"position": _random(11, 2.0)}, {"position": _random(12, 2.0)}],
        "analysis": {"extras": ["wz_decay"]},
    },
    "E4": {
        "description": "anti-phase sine-Gordon pair with different forces",
        "domain": dict(_INTERVAL),
        "subsystems": [
            {"nu": 1.0, "gamma": 0.5, "forcing": {"kind": "constant", "value": 1.0}},
            {"nu": 1.0, "gamma": 0.5, "forcing": {"kind": "single_mode", "k": 2, "amplitude": 0.5}},
        ],
        "coupling": {"topology": "pair", "kappa": 0.0, "sine_link": 1.0},
        "integration": {"dt": 0.01, "T": 60.0, "sample_every": 10},
        "initial": [{"position": _random(5, 2.0)}, {"position": _random(6, 2.0)}],
        "analysis": {"extras": ["antiphase"]},
    },
    "E5": {
        **copy.deepcopy(_E2),
        "description": "rank-N modal coupling with kappa = 2 nu (lambda_{N+1} - lambda_1)",
        "coupling": {"topology": "pair", "alpha": 0.0, "operator": {"kind": "modal", "N": 1},
                     "modal_gap_factor": 2.0},
        "analysis": {"fit_rate": True},
    },
    "E5b": {
        **copy.deepcopy(_E2),
        "description": "nodal (Lagrange) coupling at equispaced points, identical Lipschitz pair",
        "subsystems": _sg_pair(nu=1.0, gamma=0.5, lambda_s=1.0, f=0.3),
        "coupling": {"topology": "pair", "alpha": 0.0, "kappa": 20.0,
                     "operator": {"kind": "nodal", "equispaced": 7}},
        "analysis": {"fit_rate": True},
    },
    "E6": {
        "description": "chain of four sine-Gordon equations with different nu",
        "domain": dict(_INTERVAL),
        "subsystems": [
            {"nu": nu, "gamma": 1.0, "nonlinearity": {"kind": "sine_gordon", "lambda_s": 1.0},
             "forcing": {"kind": "constant", "value": 1.0}}
            for nu in (0.8, 1.0, 1.2, 1.4)
        ],
        "coupling": {"topology": "chain", "kappa": 50.0, "operator": {"kind": "identity"}},
        "integration": {"dt": 0.01, "T": 40.0, "sample_every": 10},
        "initial": [{"position": _random(20 + i, 2.0)} for i in range(4)],
        "analysis": {"extras": ["chain"]},
    },
    "E7": {
        "description": "uniform dissipativity: absorbing level for large data",
        "domain": dict(_INTERVAL),
        "subsystems": [
            {"nu": nu, "gamma": 1.0, "nonlinearity": {"kind": "sine_gordon", "lambda_s": 1.0},
             "forcing": {"kind": "constant", "value": 2.0}}
            for nu in (1.0, 1.5)
        ],
        "coupling": {"topology": "pair", "kappa": 10.0, "operator": {"kind": "identity"}},
        "integration": {"dt": 0.01, "T": 40.0, "sample_every": 10},
        "initial": [
            {"position": _random(7, 20.0), "velocity": _random(9, 20.0, 0.5)},
            {"position": _random(8, 20.0), "velocity": _random(10, 20.0, 0.5)},
        ],
        "analysis": {"extras": ["absorbing_level"]},
    },
    "decoupled-linear": {
        "description": "two uncoupled damped linear waves, exact exponential flow",
        "domain": dict(_INTERVAL),
        "subsystems": [
            {"nu": 1.0, "gamma": 0.3, "forcing": {"kind": "single_mode", "k": 1, "amplitude": 1.0}},
            {"nu": 2.0, "gamma": 0.6, "forcing": {"kind": "single_mode", "k": 3, "amplitude": 0.5}},
        ],
        "coupling": {"topology": "pair", "kappa": 0.0},
        "integration": {"dt": 0.05, "T": 20.0, "sample_every": 4, "scheme": "exponential_split"},
        "initial": [{"position": _random(1, 1.0)}, {"position": _random(2, 1.0)}],
    },
    "negative-control": {
        **copy.deepcopy(_E2),
        "description": "small kappa, large alpha: recorded non-synchronization, no claim",
        "coupling": {"topology": "pair", "kappa": 0.02, "alpha": 2.0, "operator": {"kind": "identity"}},
        "initial": [{"position": _random(3, 4.0)}, {"position": _random(4, 4.0)}],
        "analysis": {},
    },
}


def preset_names() -> list[str]:
    return list(PRESETS)


def get_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; known: {', '.join(PRESETS)}", field="preset")
    data = copy.deepcopy(PRESETS[name])
    data["preset"] = name
    data.setdefault("output", {})["name"] = name
    return data
