"""
Experiment Runner - orchestrates the check / simulate / filter pipelines for one scenario
"""
import logging
import math
import os
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd

from .artifacts import ArtifactManager, render_report
from .filtering.experiments import epsilon_scaling_experiment, verify_martingale_bounds
from .manifold.backward import BackwardSolver, ManifoldMap, compute_R, verify_shift_property
from .manifold.tracking import solve_tracking
from .models import CertificateReport, HypothesisReport, ScenarioConfig
from .noise.paths import STREAM_TRUTH, NoisePath, cells_covering, sample_path, stream_key
from .records import RecordStore
from .scenarios.template_engine import ScenarioTemplateEngine
from .simulation.integrator import SystemModel, decay_slope, integrate_full, integrate_reduced, verify_cocycle
from .spectral.hypotheses import check_hypotheses

logger = logging.getLogger(__name__)

# Probe count for the H3/H5 Lipschitz checks
HYPOTHESIS_PROBES = 10_000

# Cells between the two base times of the shift-property check
SHIFT_CHECK_CELLS = 5

# Gaps below this multiple of the solve tolerance are left out of the slope fit
GAP_FIT_FLOOR = 100.0


def eps_tag(epsilon: float) -> str:
    return f"eps_{epsilon:g}"


def resolve_threads(config: ScenarioConfig, override: Optional[int] = None) -> int:
    if override is not None:
        return override
    if config.run.threads is not None:
        return config.run.threads
    return int(os.getenv("SLOWFAST_THREADS", "1"))


class ExperimentRunner:
    """Runs one validated scenario and writes its artifacts"""

    def __init__(
        self,
        config: ScenarioConfig,
        out_dir: Optional[str] = None,
        seed: Optional[int] = None,
        threads: Optional[int] = None,
        engine: Optional[ScenarioTemplateEngine] = None,
    ):
        run = config.run.model_copy(
            update={
                "seed": config.run.seed if seed is None else seed,
                "output_dir": out_dir or config.run.output_dir or os.getenv("SLOWFAST_OUTPUT_DIR", "runs"),
            }
        )
        self.config = config.model_copy(update={"run": run})
        self.seed = run.seed
        self.threads = resolve_threads(self.config, threads)
        self.engine = engine or ScenarioTemplateEngine()
        self.artifacts = ArtifactManager(run.output_dir)
        self.records = RecordStore.for_output(run.output_dir)

    @property
    def tol(self) -> float:
        return self.config.manifold.tol

    def _model(self, epsilon: float) -> SystemModel:
        return self.engine.build_system(self.config, epsilon)

    def _start(self, command: str) -> None:
        self.artifacts.start(command, self.config, self.seed, self.threads, self.engine.derived_constants(self.config))

    def hypothesis_reports(self) -> List[HypothesisReport]:
        reports = []
        for eps in self.config.scales.epsilons:
            model = self._model(eps)
            obs = self.engine.build_observation(self.config, model.a.space, model.b.space)
            reports.append(
                check_hypotheses(model.a, model.b, model.f, model.g, model.params, h=obs, probes=HYPOTHESIS_PROBES, seed=self.seed)
            )
        return reports

    def check(self, write: bool = True) -> Tuple[bool, List[HypothesisReport]]:
        """H1-H5 at every configured epsilon"""
        if write:
            self._start("check")
        reports = self.hypothesis_reports()
        passed = all(r.passed for r in reports)
        if write:
            for r in reports:
                self.artifacts.write_json(f"hypotheses_{eps_tag(r.epsilon)}.json", r)
            self.artifacts.write_text("hypotheses.txt", "".join(render_report("hypotheses", report=r) for r in reports))
            self.artifacts.finish()
        logger.info(f"Hypothesis check for {self.config.name}: {'pass' if passed else 'fail'}")
        return passed, reports

    def _truth_path(self, model: SystemModel, t_end: float, dim3: int) -> NoisePath:
        """Truth noise with room for the backward solves and the fast lead before t = 0"""
        t_back = self.engine.t_back(self.config)
        n = max(model.back_cells(self.tol), model.back_cells(self.tol, t_back))
        grid = model.grid(t_end, 2 * n * model.dt)
        return sample_path(model.cov1, model.cov2, dim3, grid, self.seed, stream_key(0, STREAM_TRUTH))

    def simulate_epsilon(self, epsilon: float) -> Dict[str, Any]:
        """Full and reduced trajectories, their gap, and the manifold certificate at one epsilon"""
        cfg = self.config
        model = self._model(epsilon)
        model.ensure_admissible()
        x0, y0 = self.engine.initial_state(cfg, model)
        horizon = cfg.scales.horizon
        dt = model.dt
        t_track = None if cfg.manifold.tracking_horizon == "auto" else float(cfg.manifold.tracking_horizon)
        track_end = cells_covering(10 * model.params.epsilon / model.params.mu if t_track is None else t_track, dt) * dt
        t_end = max(cells_covering(horizon, dt) * dt, track_end)
        path = self._truth_path(model, t_end, cfg.filter.dim3)
        tag = eps_tag(epsilon)
        self.artifacts.register(self.records.save_path(path, f"truth_{tag}"))

        t_back = self.engine.t_back(cfg)
        t_sim = cells_covering(horizon, dt) * dt
        full = integrate_full(model, (x0, y0), path, 0.0, t_sim)
        tracking = solve_tracking(model, (x0, y0), path, t_track, self.tol, cfg.manifold.max_iterations)
        solver = BackwardSolver(model, self.tol, t_back, cfg.manifold.max_iterations)
        # the run from the tracking point is the one the full trajectory is attracted to
        attracted = integrate_reduced(model, tracking.tracking_point[0], solver, path, 0.0, t_sim)
        if cfg.manifold.reduced_initial == "tracking":
            reduced = attracted
        else:
            reduced = integrate_reduced(model, x0, solver, path, 0.0, t_sim)
        gap = full.gap(attracted)
        gap_x0 = full.gap(reduced)
        slope = decay_slope(full.times, gap, floor=GAP_FIT_FLOOR * self.tol)
        logger.info(f"eps={epsilon:g}: gap slope from the tracking point {slope:.4g}, -mu/eps = {-model.params.mu / epsilon:.4g}")

        manifold = ManifoldMap(model, 0.0, path, self.tol, t_back, cfg.manifold.max_iterations)
        probe = manifold.probe_lipschitz(pairs=cfg.manifold.lipschitz_probes, seed=self.seed)
        bound = compute_R(model, path, self.tol, t_back)
        certificate = CertificateReport(
            epsilon=epsilon,
            mu=model.params.mu,
            epsilon0=None if math.isinf(model.epsilon0) else model.epsilon0,
            contraction_constant=model.contraction_constant,
            lip_bound=manifold.lip_bound,
            lip_empirical=probe["max_ratio"],
            lip_certified=bool(probe["passed"]),
            random_bound=float(bound.value),
            random_bound_components=(float(bound.slow), float(bound.fast)),
            envelope_passed=tracking.envelope_passed,
            envelope_min_margin=tracking.min_margin,
            decay_slope=tracking.slope,
            tracking_iterations=tracking.iterations,
        )
        half = cells_covering(t_sim / 2, dt) * dt
        checks = [
            verify_cocycle(model, (x0, y0), path, half, t_sim - half),
            verify_shift_property(model, path, half, half - SHIFT_CHECK_CELLS * dt, x0, self.tol),
        ]

        self.artifacts.write_csv(f"trajectory_full_{tag}.csv", full.to_frame())
        self.artifacts.write_csv(f"trajectory_reduced_{tag}.csv", reduced.to_frame())
        self.artifacts.write_csv(f"trajectory_attracted_{tag}.csv", attracted.to_frame())
        self.artifacts.write_csv(f"gap_{tag}.csv", pd.DataFrame({"t": full.times, "gap": gap, "gap_reduced": gap_x0}))
        self.artifacts.write_csv(f"tracking_{tag}.csv", tracking.to_frame())
        self.artifacts.write_csv(f"backward_{tag}.csv", solver.solve(x0, 0.0, path).to_frame())
        self.artifacts.write_json(f"certificate_{tag}.json", certificate)
        self.artifacts.write_json(f"verification_{tag}.json", [c.model_dump() for c in checks])
        self.artifacts.register(self.records.save_trajectory(full, f"full_{tag}"))
        return {"epsilon": epsilon, "gap_slope": slope, "gap_end": float(gap_x0[-1]), "certificate": certificate, "checks": checks}

    def simulate(self) -> List[Dict[str, Any]]:
        self._start("simulate")
        results = [self.simulate_epsilon(eps) for eps in self.config.scales.epsilons]
        summary = pd.DataFrame(
            [
                {
                    "epsilon": r["epsilon"],
                    "gap_slope": r["gap_slope"],
                    "gap_end": r["gap_end"],
                    "tracking_slope": r["certificate"].decay_slope,
                    "mu_over_eps": r["certificate"].mu / r["epsilon"],
                    "envelope_passed": r["certificate"].envelope_passed,
                    "lip_empirical": r["certificate"].lip_empirical,
                    "lip_bound": r["certificate"].lip_bound,
                }
                for r in results
            ]
        )
        self.artifacts.write_csv("simulate_summary.csv", summary)
        self.artifacts.write_text("certificates.txt", "".join(render_report("certificate", report=r["certificate"]) for r in results))
        self.artifacts.finish()
        return results

    def filter(self) -> Dict[str, Any]:
        """Epsilon-scaling table of E[d(full, reduced)] and the inverse-moment report"""
        cfg = self.config
        fc = cfg.filter
        self._start("filter")
        epsilons = cfg.scales.epsilons
        model = self._model(epsilons[0])
        obs = self.engine.build_observation(cfg, model.a.space, model.b.space)
        z0 = self.engine.initial_state(cfg, model)
        dictionary = self.engine.build_dictionary(cfg, model)
        times = fc.times or [cfg.scales.horizon]

        scaling = epsilon_scaling_experiment(
            model,
            obs,
            z0,
            epsilons,
            times,
            dictionary,
            p=fc.p,
            n_particles=fc.particles,
            replications=cfg.run.replications,
            seed=self.seed,
            coarsen=fc.coarsen,
            chunk_size=fc.chunk_size,
            threads=self.threads,
            tol=self.tol,
        )
        martingale = verify_martingale_bounds(
            model,
            obs,
            z0,
            cfg.scales.horizon,
            p=fc.p,
            n_mc=fc.mc_samples,
            mc_inner=fc.mc_inner,
            seed=self.seed,
            mode=fc.martingale_mode,
            coarsen=fc.coarsen,
            threads=self.threads,
            tol=self.tol,
        )
        self.artifacts.write_csv("scaling.csv", scaling.table)
        self.artifacts.write_csv("scaling_runs.csv", scaling.runs)
        for (eps, mode), frame in sorted(scaling.series.items()):
            self.artifacts.write_csv(f"filter_{mode}_{eps_tag(eps)}.csv", frame)
        self.artifacts.write_json("scaling_summary.json", scaling.summary())
        self.artifacts.write_json("martingale.json", martingale)
        text = render_report(
            "scaling",
            p=fc.p,
            excluded=scaling.excluded,
            rows=scaling.table.to_dict(orient="records"),
            exponent=scaling.exponent,
            envelope_c=scaling.envelope_c,
            envelope_r2=scaling.envelope_r2,
        )
        self.artifacts.write_text("filter.txt", text + render_report("martingale", report=martingale))
        self.artifacts.finish()
        return {"scaling": scaling, "martingale": martingale}
