"""
Experiment matrix: teachers -> logit exports -> ensembles -> students.

A matrix spec is an INI file:

    [matrix]
    architectures = cpr, passt
    dg_presets = DIRFMS, FMS
    seeds = 0, 1, 2
    base_config = base.ini
    student_preset = DIRFMS
    ensembles = cpr+passt/DIRFMS+FMS; cpr/DIRFMS

    [sizes]
    cpr = 128K

    [imports]
    passt.DIRFMS = p0.logits, p1.logits, p2.logits
    passt.FMS = ...

Trained architectures get one teacher job per (architecture, preset, seed);
imported architectures contribute their listed stores. Each ensemble
averages the members of every (architecture, preset) pair it names and
trains one student job over all seeds.
"""
import configparser
import functools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from core.exceptions import BudgetExceededError
from core.logits import ensemble_logits, import_logits, save_logits
from core.networks import SIZE_LADDER, require_budget
from experiments.config import load_config
from experiments.dataset import DatasetManifest
from experiments.exceptions import MatrixSpecError, MissingImportError, UnknownPresetError
from experiments.inference import export_logits
from experiments.presets import DG_PRESETS, IMPORTED_ARCHITECTURES, resolve_preset
from experiments.results import row_from_runs, row_from_stores, write_results
from experiments.training import Trainer, budget_complexity, run_id_for

logger = logging.getLogger(__name__)

TRAINED_ARCHITECTURES = ("cpr", "cpm")
EXPORT_FILE = "logits-all.logits"


def _split_list(value, sep=","):
    return [item.strip() for item in value.split(sep) if item.strip()]


@dataclass(frozen=True)
class EnsembleSpec:
    architectures: tuple
    presets: tuple

    @property
    def name(self):
        return f"{'+'.join(self.architectures)}/{'+'.join(self.presets)}"

    @property
    def slug(self):
        return self.name.replace("/", "_").replace("+", "-").lower()

    @classmethod
    def parse(cls, text):
        try:
            archs, presets = text.split("/")
        except ValueError:
            raise MatrixSpecError(f"ensemble {text!r} must look like arch+arch/PRESET+PRESET") from None
        return cls(tuple(a.lower() for a in _split_list(archs, "+")),
                   tuple(p.upper() for p in _split_list(presets, "+")))


@dataclass
class MatrixSpec:
    architectures: tuple
    dg_presets: tuple
    seeds: tuple
    base_config: Path
    student_preset: str = "DIRFMS"
    ensembles: tuple = ()
    sizes: dict = field(default_factory=dict)
    imports: dict = field(default_factory=dict)

    def __post_init__(self):
        known = TRAINED_ARCHITECTURES + IMPORTED_ARCHITECTURES
        for arch in self.architectures:
            if arch not in known:
                raise MatrixSpecError(f"unknown architecture {arch!r}; expected one of {', '.join(known)}")
        for preset in (*self.dg_presets, self.student_preset):
            if preset not in DG_PRESETS:
                raise UnknownPresetError(f"unknown DG preset {preset!r}; expected one of {', '.join(DG_PRESETS)}")
        if not self.seeds:
            raise MatrixSpecError("a matrix needs at least one seed")
        if not self.ensembles:
            self.ensembles = (EnsembleSpec(tuple(self.architectures), tuple(self.dg_presets)),)
        for ens in self.ensembles:
            for arch in ens.architectures:
                if arch not in self.architectures:
                    raise MatrixSpecError(f"ensemble {ens.name} uses architecture {arch!r} outside the matrix")
            for preset in ens.presets:
                if preset not in self.dg_presets:
                    raise UnknownPresetError(f"ensemble {ens.name} uses undefined DG preset {preset!r}")
        for arch in self.architectures:
            if arch in IMPORTED_ARCHITECTURES:
                for preset in self.dg_presets:
                    if not self.imports.get((arch, preset)):
                        raise MissingImportError(f"no imported logit stores listed for {arch}.{preset}")

    def base_channels(self, arch, default):
        size = self.sizes.get(arch)
        if size is None:
            return default
        return SIZE_LADDER[arch].get(size.upper()) or int(size)


def load_matrix_spec(path):
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    if not parser.read(path):
        raise MatrixSpecError(f"matrix spec {path} not found")
    if not parser.has_section("matrix"):
        raise MatrixSpecError(f"{path}: missing [matrix] section")
    section = parser["matrix"]
    base_dir = path.resolve().parent
    try:
        seeds = tuple(int(s) for s in _split_list(section.get("seeds", "0, 1, 2")))
    except ValueError as exc:
        raise MatrixSpecError(f"{path}: seeds must be integers") from exc
    imports = {}
    if parser.has_section("imports"):
        for key, value in parser["imports"].items():
            arch, _, preset = key.partition(".")
            imports[(arch.lower(), preset.upper())] = tuple(base_dir / p for p in _split_list(value))
    try:
        sizes = {k.lower(): v for k, v in parser["sizes"].items()} if parser.has_section("sizes") else {}
        return MatrixSpec(
            architectures=tuple(a.lower() for a in _split_list(section.get("architectures", "cpr"))),
            dg_presets=tuple(p.upper() for p in _split_list(section.get("dg_presets", "DIRFMS"))),
            seeds=seeds,
            base_config=base_dir / section.get("base_config", "base.ini"),
            student_preset=section.get("student_preset", "DIRFMS").upper(),
            ensembles=tuple(EnsembleSpec.parse(e) for e in _split_list(section.get("ensembles", ""), ";")),
            sizes=sizes,
            imports=imports,
        )
    except KeyError as exc:
        raise MatrixSpecError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class TrainJob:
    kind: str
    group: str
    config: object
    seeds: tuple
    root: Path
    export: bool = False

    def run_dirs(self):
        return [self.root / run_id_for(self.config, seed) for seed in self.seeds]


@dataclass
class EnsemblePlan:
    spec: EnsembleSpec
    members: list
    output: Path

    @property
    def n_models(self):
        return len(self.members)


@dataclass
class MatrixPlan:
    teacher_jobs: list
    imports: dict
    ensembles: list
    student_jobs: list


def _role_config(base, role, arch, preset, base_channels, teacher_logits=None):
    aug = resolve_preset(preset, role, arch)
    return base.replace(
        model={"architecture": arch, "role": role, "base_channels": base_channels},
        augment={"preset": preset, "alpha_fms": aug.alpha_fms, "p_fms": aug.p_fms, "p_dir": aug.p_dir},
        distill={"teacher_logits": teacher_logits},
    )


def plan_matrix(spec, out_root, base=None):
    """Materialise every job of the matrix without running anything."""
    out_root = Path(out_root)
    base = base or load_config(spec.base_config)
    teacher_jobs, members = [], {}
    for arch in spec.architectures:
        for preset in spec.dg_presets:
            if arch in IMPORTED_ARCHITECTURES:
                members[(arch, preset)] = list(spec.imports[(arch, preset)])
                continue
            config = _role_config(base, "teacher", arch, preset, spec.base_channels(arch, base.model.base_channels))
            jobs = [
                TrainJob("teacher", f"{arch}/{preset}", config.replace(train={"seed": seed}), (seed,),
                         out_root / "teachers", export=True)
                for seed in spec.seeds
            ]
            teacher_jobs += jobs
            members[(arch, preset)] = [job.run_dirs()[0] / EXPORT_FILE for job in jobs]

    ensembles, student_jobs = [], []
    student_arch = base.model.architecture
    for ens in spec.ensembles:
        paths = [p for arch in ens.architectures for preset in ens.presets for p in members[(arch, preset)]]
        plan = EnsemblePlan(ens, paths, out_root / "ensembles" / f"{ens.slug}.logits")
        ensembles.append(plan)
        config = _role_config(base, "student", student_arch, spec.student_preset, base.model.base_channels,
                              teacher_logits=plan.output)
        config = config.replace(train={"seed": spec.seeds[0]})
        student_jobs.append(TrainJob("student", ens.name, config, tuple(spec.seeds), out_root / "students" / ens.slug))
    imports = {key: paths for key, paths in members.items() if key[0] in IMPORTED_ARCHITECTURES}
    return MatrixPlan(teacher_jobs, imports, ensembles, student_jobs)


def run_job(job):
    """Train every seed of a job (and export logits for teachers). ORM-free."""
    manifest = DatasetManifest.load(job.config.data.manifest)
    finished = []
    for seed, run_dir in zip(job.seeds, job.run_dirs()):
        trainer = Trainer(job.config.replace(train={"seed": seed}), run_dir, seed=seed, manifest=manifest)
        result = trainer.run()
        if job.export:
            store = export_logits(trainer.model, manifest, None, trainer.frontend,
                                  job.config.augment.crop_seconds, job.config.train.batch_size)
            save_logits(store, run_dir / EXPORT_FILE)
        finished.append(str(result.run_dir))
    return finished


class MatrixObserver:
    """Called in the main process as the matrix progresses. Default: no-op."""

    def matrix_planned(self, plan):
        pass

    def job_finished(self, job, run_dirs):
        pass

    def job_refused(self, job, error):
        pass

    def ensemble_built(self, ensemble):
        pass


def check_student_budgets(plan, observer):
    """Refuse the whole matrix before any training when a student is over budget."""
    for job in plan.student_jobs:
        try:
            require_budget(budget_complexity(job.config))
        except BudgetExceededError as exc:
            observer.job_refused(job, exc)
            raise


def _run_all(jobs, workers, observer):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_job, job) for job in jobs]
            return [_finish(job, future.result, observer) for job, future in zip(jobs, futures)]
    return [_finish(job, functools.partial(run_job, job), observer) for job in jobs]


def _finish(job, execute, observer):
    try:
        run_dirs = [Path(d) for d in execute()]
    except BudgetExceededError as exc:
        observer.job_refused(job, exc)
        raise
    observer.job_finished(job, run_dirs)
    return run_dirs


@dataclass
class MatrixOutcome:
    plan: MatrixPlan
    rows: list
    csv_path: Path
    md_path: Path


def build_ensembles(plan, observer=None):
    for ens in plan.ensembles:
        for path in ens.members:
            if not Path(path).exists():
                raise MissingImportError(f"ensemble {ens.spec.name}: logit store {path} does not exist")
        store = ensemble_logits([import_logits(p) for p in ens.members])
        save_logits(store, ens.output)
        logger.info("ensemble %s: %d members -> %s", ens.spec.name, ens.n_models, ens.output)
        if observer is not None:
            observer.ensemble_built(ens)


def collect_rows(plan, manifest):
    rows = []
    for group in dict.fromkeys(job.group for job in plan.teacher_jobs):
        jobs = [job for job in plan.teacher_jobs if job.group == group]
        arch, preset = group.split("/")
        rows.append(row_from_runs(group, "teacher", [arch], [preset], [d for j in jobs for d in j.run_dirs()]))
    for (arch, preset), paths in plan.imports.items():
        rows.append(row_from_stores(f"{arch}/{preset}", "imported", [arch], [preset],
                                    [import_logits(p) for p in paths], manifest))
    for ens in plan.ensembles:
        rows.append(row_from_stores(ens.spec.name, "ensemble", ens.spec.architectures, ens.spec.presets,
                                    [import_logits(ens.output)], manifest, n_models=ens.n_models))
    for job in plan.student_jobs:
        arch = job.config.model.architecture
        rows.append(row_from_runs(f"student<{job.group}>", "student", [arch], [job.config.augment.preset],
                                  job.run_dirs()))
    return rows


def run_matrix(spec, out_root, workers=1, observer=None):
    """Run the whole matrix and write results.csv / results.md under out_root.

    `observer` (a MatrixObserver) hears about every job, refusal and
    ensemble as soon as it happens.
    """
    out_root = Path(out_root)
    observer = observer or MatrixObserver()
    plan = plan_matrix(spec, out_root)
    logger.info("matrix: %d teacher jobs, %d ensembles, %d student jobs (workers=%d)",
                len(plan.teacher_jobs), len(plan.ensembles), len(plan.student_jobs), workers)
    observer.matrix_planned(plan)
    check_student_budgets(plan, observer)
    _run_all(plan.teacher_jobs, workers, observer)
    build_ensembles(plan, observer)
    _run_all(plan.student_jobs, workers, observer)
    manifest = DatasetManifest.load(plan.student_jobs[0].config.data.manifest)
    rows = collect_rows(plan, manifest)
    csv_path, md_path = write_results(rows, out_root)
    return MatrixOutcome(plan, rows, csv_path, md_path)
