"""End-to-end training: teacher, meta-data collection and the reweighted student."""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import meta as mt
from .analysis import ScoreLog, build_probe
from .autodiff import OptimizerState
from .bootstrap import collect_meta, estimate_uncertainty, filter_hard, infer_scores
from .errors import ConfigError, MebnsError, NumericError, RangeError
from .evaluation import build_evalset, evaluate
from .graph import load_graph, read_split_manifest, split_edges
from .model import encode, encoder, init_gcn, pair_logits, sample_losses
from .samplers import KHopIndex, SampleSet, SamplerConfig, generate_negatives

log = logging.getLogger(__name__)

# seed stream tags; every random draw is keyed by (seed, tag[, epoch])
_INIT, _SAMPLE, _UMD, _META = 1, 2, 3, 4
SCHEMA_VERSION = 1


def _seed(cfg_seed, tag, *rest):
    return [int(cfg_seed), tag, *map(int, rest)]


@dataclass
class RunConfig:
    edge_file: str | None = None
    feature_file: str | None = None
    split_manifest: str | None = None
    num_nodes: int | None = None
    num_features: int | None = None
    sampler: str = "uniform"
    T: int = 100
    beta: float = 0.5
    delta: float = 0.05
    student_delta: float | None = None
    tau: float = 2e-5
    N: int = 20
    K: int = 3
    dns_pool: int = 8
    lr_teacher: float = 0.01
    lr_student: float = 0.01
    lr_inner: float = 0.01
    lr_meta: float = 0.01
    patience: int = 20
    max_student_epochs: int = 500
    seed: int = 0
    filter_scope: str = "all"
    mebns: bool = True
    log_scores: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.sampler in ("uniform", "pns", "dns"), f"sampler must be one of uniform, pns, dns (got {self.sampler!r})")
        need(isinstance(self.T, int) and self.T >= 0, "T must be an integer >= 0")
        need(0.0 < self.beta <= 1.0, "beta must be in (0,1]")
        need(0.0 <= self.delta <= 1.0, "delta must be in [0,1]")
        need(self.student_delta is None or 0.0 <= self.student_delta <= 1.0, "student_delta must be in [0,1]")
        need(self.tau > 0, "tau must be > 0")
        need(isinstance(self.N, int) and self.N >= 2, "N must be an integer >= 2")
        need(isinstance(self.K, int) and self.K >= 2, "K must be an integer >= 2")
        need(isinstance(self.dns_pool, int) and self.dns_pool >= 1, "dns_pool must be an integer >= 1")
        for name in ("lr_teacher", "lr_student", "lr_inner"):
            need(getattr(self, name) > 0, f"{name} must be > 0")
        need(self.lr_meta >= 0, "lr_meta must be >= 0")
        need(isinstance(self.patience, int) and self.patience >= 1, "patience must be an integer >= 1")
        need(isinstance(self.max_student_epochs, int) and self.max_student_epochs >= 0,
             "max_student_epochs must be an integer >= 0")
        need(isinstance(self.seed, int) and self.seed >= 0, "seed must be an integer >= 0")
        need(self.filter_scope in ("all", "negatives_only"), "filter_scope must be all or negatives_only")
        return self

    def sampler_config(self, phase="teacher"):
        d = self.delta if phase == "teacher" or self.student_delta is None else self.student_delta
        return SamplerConfig(kind=self.sampler, delta=d, K=self.K, dns_pool=self.dns_pool)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config key {unknown[0]!r}")
        return cls(**data)


@dataclass
class TrainReport:
    config: dict
    teacher_epochs: list = field(default_factory=list)
    student_epochs: list = field(default_factory=list)
    best_epoch: int | None = None
    test: dict = field(default_factory=dict)
    valid: dict = field(default_factory=dict)
    sizes: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)  # wall-clock, kept out of the JSON report
    score_log: ScoreLog | None = None
    params: object = None
    meta_params: object = None

    def to_dict(self):
        return {
            "best_epoch": self.best_epoch,
            "config": self.config,
            "seed": self.config.get("seed"),
            "sizes": self.sizes,
            "student_epochs": self.student_epochs,
            "teacher_epochs": self.teacher_epochs,
            "test": self.test,
            "valid": self.valid,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            config=data["config"],
            teacher_epochs=data["teacher_epochs"],
            student_epochs=data["student_epochs"],
            best_epoch=data["best_epoch"],
            test=data["test"],
            valid=data["valid"],
            sizes=data["sizes"],
        )


@dataclass
class Data:
    split: object
    evalset: object
    probe: SampleSet | None = None


def prepare(cfg, split=None, evalset=None):
    if split is None:
        if cfg.edge_file is None:
            raise ConfigError("edge_file is required")
        g = load_graph(cfg.edge_file, cfg.feature_file, cfg.num_nodes, cfg.num_features)
        split = read_split_manifest(cfg.split_manifest, g) if cfg.split_manifest else split_edges(g, cfg.seed)
    if evalset is None:
        evalset = build_evalset(split, cfg.seed)
    probe = build_probe(split, cfg.seed) if cfg.log_scores else None
    return Data(split, evalset, probe)


def _as_data(split, cfg):
    return split if isinstance(split, Data) else prepare(cfg, split)


def _metrics_row(emb, evalset):
    m = evaluate(emb, evalset, "valid")
    return {"valid_auc": m["auc"], "valid_hits@20": m["hits@20"]}


def _log_probe(report, data, epoch, emb):
    if data.probe is not None:
        p = data.probe
        report.score_log.record(epoch, 1.0 / (1.0 + np.exp(-pair_logits(emb, p.u, p.v))))


def _epoch_samples(data, cfg, phase, epoch, emb, khop, tag=_SAMPLE):
    split = data.split
    pos = SampleSet.positives(split.train)
    scorer = None
    if cfg.sampler == "dns":
        scorer = lambda a, b: pair_logits(emb, a, b)  # noqa: E731  logits rank like probabilities
    neg = generate_negatives(
        split.full, split.message_graph, pos, cfg.sampler_config(phase), _seed(cfg.seed, tag, epoch), scorer, khop
    )
    return pos.concat(neg)


def train_teacher(split, cfg, on_epoch=None):
    """Full-batch teacher training for ``cfg.T`` epochs; returns (theta, report, optimizer)."""
    data = _as_data(split, cfg)
    view = data.split.message_graph
    theta = init_gcn(view.num_features, _seed(cfg.seed, _INIT))
    opt = OptimizerState("adam", cfg.lr_teacher)
    report = TrainReport(cfg.to_dict())
    if data.probe is not None:
        report.score_log = ScoreLog.for_probe(data.probe)
        _log_probe(report, data, 0, encode(view, theta))
    sc = cfg.sampler_config("teacher")
    khop = KHopIndex(view, data.split.full, cfg.K) if sc.delta > 0 else None
    step_time = 0.0
    for epoch in range(1, cfg.T + 1):
        t0 = time.perf_counter()
        leaves = theta.as_vars()
        h = encoder(view, leaves)
        samples = _epoch_samples(data, cfg, "teacher", epoch, h.value, khop)
        losses = sample_losses(h, samples)
        try:
            bundle = mt.weighted_step(theta, opt, leaves, losses)
        except NumericError as e:
            raise NumericError(f"teacher diverged at epoch {epoch}: {e}", e.value) from e
        step_time += time.perf_counter() - t0
        emb = encode(view, theta)
        row = {"epoch": epoch, "loss": bundle.loss, "grad_norm": bundle.norm(), **_metrics_row(emb, data.evalset)}
        report.teacher_epochs.append(row)
        _log_probe(report, data, epoch, emb)
        if on_epoch is not None:
            on_epoch("teacher", epoch, theta)
    report.timings["teacher_step_s"] = step_time
    report.timings["teacher_epochs"] = cfg.T
    return theta, report, opt


def train_student(split, theta_t, cfg, teacher_opt=None, report=None, on_epoch=None, meta_params=None):
    """Meta-reweighted student starting from the teacher's parameters.

    Returns ``(best_theta, report)``; the student continues the teacher's epoch
    numbering so its sampling seeds follow on from the teacher's.
    """
    data = _as_data(split, cfg)
    view = data.split.message_graph
    for name, a in theta_t.items():
        if not np.all(np.isfinite(a)):
            raise NumericError(f"teacher parameter {name} is not finite")
    if report is None:
        report = TrainReport(cfg.to_dict())
        if data.probe is not None:
            report.score_log = ScoreLog.for_probe(data.probe)
    outer = teacher_opt.clone() if teacher_opt is not None else OptimizerState("adam", cfg.lr_student)
    outer.lr = cfg.lr_student
    delta = meta_params.clone() if meta_params is not None else mt.init_meta(_seed(cfg.seed, _META))
    state = mt.BilevelState(theta_t.clone(), delta, cfg.lr_inner, cfg.lr_meta, outer)

    teacher_emb = encode(view, theta_t)
    t0 = time.perf_counter()
    train_o = _epoch_samples(data, cfg, "teacher", 0, teacher_emb, None, tag=_UMD)
    unc = estimate_uncertainty(theta_t, view, train_o, cfg.N, _seed(cfg.seed, _UMD))
    try:
        meta_set = collect_meta(train_o, unc, cfg.tau)
    except ConfigError as e:
        raise ConfigError(f"meta set empty: {e}") from e
    report.timings["umd_s"] = time.perf_counter() - t0
    report.sizes.update({"meta": len(meta_set), "meta_pool": len(train_o), "meta_min_B": float(unc.values.min())})

    sc = cfg.sampler_config("student")
    khop = KHopIndex(view, data.split.full, cfg.K) if sc.delta > 0 else None
    best_auc, best_theta, best_epoch, since = -np.inf, None, None, 0
    step_time = 0.0
    for e in range(1, cfg.max_student_epochs + 1):
        epoch = cfg.T + e
        t0 = time.perf_counter()
        fwd = mt.forward(state, view)
        samples = _epoch_samples(data, cfg, "student", epoch, fwd[1].value, khop)
        scores = infer_scores(theta_t, view, samples, emb=teacher_emb)
        try:
            hard, _ = filter_hard(samples, scores, cfg.beta, cfg.filter_scope)
        except ConfigError as err:
            raise ConfigError(f"hard set empty: {err}") from err
        try:
            tele = mt.bilevel_step(state, hard, meta_set, view, fwd)
        except NumericError as err:
            raise NumericError(f"student diverged at epoch {epoch}: {err}", err.value) from err
        step_time += time.perf_counter() - t0
        emb = encode(view, state.theta)
        row = {"epoch": epoch, "hard": len(hard), **tele, **_metrics_row(emb, data.evalset)}
        report.student_epochs.append(row)
        _log_probe(report, data, epoch, emb)
        if on_epoch is not None:
            on_epoch("student", epoch, state.theta)
        if row["valid_auc"] > best_auc:
            best_auc, best_theta, best_epoch, since = row["valid_auc"], state.theta.clone(), epoch, 0
        else:
            since += 1
            if since >= cfg.patience:
                break
    report.timings["student_step_s"] = step_time
    report.timings["student_epochs"] = len(report.student_epochs)
    report.best_epoch = best_epoch
    report.meta_params = state.delta
    return (best_theta if best_theta is not None else state.theta.clone()), report


class PhaseError(MebnsError):
    """Wraps a failure with the pipeline phase it happened in."""

    def __init__(self, phase, cause):
        self.phase = phase
        self.cause = cause
        self.kind = getattr(cause, "kind", "error")
        super().__init__(f"[{phase}] {cause}")


def _phase(name, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except PhaseError:
        raise
    except (MebnsError, OSError) as e:
        raise PhaseError(name, e) from e


def run_mebns(cfg, data=None, checkpoint_dir=None):
    """Load, split, train teacher (and student when ``cfg.mebns``), evaluate on test."""
    if data is None:
        data = _phase("load", prepare, cfg)
    theta_t, report, opt = _phase("teacher", train_teacher, data, cfg)
    view = data.split.message_graph
    emb_t = encode(view, theta_t)
    report.test["teacher"] = evaluate(emb_t, data.evalset, "test")
    report.valid["teacher"] = evaluate(emb_t, data.evalset, "valid")
    final = theta_t
    if cfg.mebns:
        final, report = _phase("student", train_student, data, theta_t, cfg, opt, report)
        emb = encode(view, final)
        report.test["final"] = evaluate(emb, data.evalset, "test")
        report.valid["final"] = evaluate(emb, data.evalset, "valid")
    else:
        report.test["final"] = report.test["teacher"]
        report.valid["final"] = report.valid["teacher"]
    report.sizes.update({
        "nodes": int(data.split.full.num_nodes),
        "train": len(data.split.train),
        "valid": len(data.split.valid),
        "test": len(data.split.test),
    })
    if checkpoint_dir is not None:
        d = Path(checkpoint_dir)
        d.mkdir(parents=True, exist_ok=True)
        header = {"schema_version": SCHEMA_VERSION, "config": report.config, "seed": cfg.seed}
        theta_t.save(d / "teacher.json", {**header, "phase": "teacher"})
        final.save(d / "final.json", {**header, "phase": "final", "best_epoch": report.best_epoch})
        if cfg.mebns:
            report.meta_params.save(d / "meta.json", {**header, "phase": "meta"})
    report.params = final
    return report
