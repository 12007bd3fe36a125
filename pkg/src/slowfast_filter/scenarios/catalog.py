"""
Scenario catalog - built-in slow-fast systems that can be run by name or dumped as YAML templates
"""

SCENARIO_CATALOG = {
    "thermoelastic": {
        "description": "Damped wave equation (slow) coupled to a heat equation (fast) through a bounded sine of three arguments",
        "notes": [
            "Experimental defaults: 16 modes per ladder with lambda_k = k^2, dim3 = 8",
            "F = G = 0.5 sin(v + v_t + theta) gives L = 0.5 * sqrt(2); kappa = 2 > L",
        ],
        "config": {
            "name": "thermoelastic",
            "description": "Thermoelastic wave/heat system",
            "system": {
                "slow": {"kind": "wave", "modes": 16, "damping": 1.0},
                "fast": {"kappa": 2.0, "modes": 16},
                "F": {"kind": "thermoelastic-coupling", "params": {"amplitude": 0.5}},
                "G": {"kind": "thermoelastic-coupling", "params": {"amplitude": 0.5}},
                "sigma1": 0.5,
                "sigma2": 0.5,
                "cov1": {"scale": 1.0, "decay": 2.0},
                "cov2": {"scale": 1.0, "decay": 2.0},
                "initial": {"amplitude": 1.0},
            },
            "scales": {"epsilon": [0.1, 0.05, 0.025], "mu": "auto", "gamma1": "auto", "horizon": 1.0},
            "manifold": {"tol": 1e-8, "t_back": "auto", "max_iterations": 200},
            "filter": {
                "h": {"kind": "sine-of-slow"},
                "dim3": 8,
                "particles": 2000,
                "coarsen": 5,
                "p": 3.0,
                "dictionary_size": 16,
            },
            "run": {"seed": 0, "replications": 20},
        },
    },
    "decoupled": {
        "description": "Same operators as the thermoelastic system with F = G = 0 (pure Ornstein-Uhlenbeck fast process)",
        "notes": ["The gap between full and reduced trajectories decays at rate gamma2 / eps"],
        "config": {
            "name": "decoupled",
            "description": "Wave/heat system without coupling",
            "system": {
                "slow": {"kind": "wave", "modes": 16, "damping": 1.0},
                "fast": {"kappa": 2.0, "modes": 16},
                "F": {"kind": "zero"},
                "G": {"kind": "zero"},
                "sigma1": 0.5,
                "sigma2": 0.5,
            },
            "scales": {"epsilon": 0.05, "horizon": 1.0},
            "filter": {"h": {"kind": "sine-of-slow"}, "dim3": 8},
        },
    },
    "linear-gaussian": {
        "description": "Linear slow drift with clipped-linear observation of the slow state, for Kalman-Bucy comparison",
        "notes": ["The clip bound is far outside the reachable states, so the model is linear-Gaussian in practice"],
        "config": {
            "name": "linear-gaussian",
            "description": "Linear-Gaussian reference case",
            "system": {
                "slow": {"kind": "diagonal", "modes": 8, "entries": [-1.0, -1.5, -2.0, -2.5, -3.0, -3.5, -4.0, -4.5]},
                "fast": {"kappa": 2.0, "modes": 4},
                "F": {"kind": "linear-coupling", "params": {"source": "x", "gain": 0.3}},
                "G": {"kind": "zero"},
                "sigma1": 0.5,
                "sigma2": 0.5,
            },
            "scales": {"epsilon": 0.05, "horizon": 1.0},
            "filter": {
                "h": {"kind": "bounded-linear", "params": {"gain": 1.0, "bound": 1.0e6}},
                "dim3": 4,
                "dictionary_size": 8,
            },
        },
    },
}
