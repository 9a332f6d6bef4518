from __future__ import annotations

import argparse
import json
import os
from pathlib import Path
from typing import List, Sequence, Tuple

from pydantic import ValidationError

from metameta.aggregator import FitCache
from metameta.cli.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from metameta.cli.runlog import RunLog
from metameta.clustering import EmbeddingSpec
from metameta.config import (
    SEED_ENV_VAR,
    ExperimentConfig,
    FileDataConfig,
    ModalMixtureSpec,
    apply_seed_override,
    load_experiment_config,
)
from metameta.errors import CheckpointError, ConfigError
from metameta.eval import evaluate, evaluate_fiveway, write_report
from metameta.eval.evaluate import EvalReport
from metameta.logger import get_logger
from metameta.numerics.rng import Rng
from metameta.pipelines import (
    train_baseline_ensemble,
    train_end_to_end,
    train_single_maml,
    train_three_step,
    train_whole_data_aggregator,
)
from metameta.pipelines.predictors import Predictor
from metameta.problems import (
    ClassBank,
    ProblemDistribution,
    generate_modal_bank,
    load_feature_bank,
    save_feature_bank,
    split_bank,
)
from metameta.types import MethodId, SplitTag, TrainMethod

logger = get_logger(__name__)


def _seed_source() -> str:
    return "env" if os.environ.get(SEED_ENV_VAR, "").strip() else "config"


def load_banks(cfg: ExperimentConfig) -> Tuple[ClassBank, ClassBank]:
    """(meta-train, meta-test) banks for a config; synthetic data is generated from the seed."""
    data = cfg.data
    if isinstance(data, FileDataConfig):
        bank = load_feature_bank(data.path, SplitTag.META_TRAIN)
        if data.test_path is not None:
            return bank, load_feature_bank(data.test_path, SplitTag.META_TEST)
        return split_bank(bank, data.meta_test_fraction, Rng(cfg.seed).spawn("split"))
    train_bank, test_bank, _ = generate_modal_bank(data.spec, Rng(cfg.seed).spawn("data"))
    return train_bank, test_bank


def default_log_path(out: Path) -> Path:
    return out.with_name(out.name + ".runlog.jsonl")


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_experiment_config(args.config)
    method = TrainMethod(args.method)
    if args.warm_start and method is not TrainMethod.E2E:
        raise ConfigError("--warm-start is only valid with --method e2e")

    train_bank, _ = load_banks(cfg)
    dist = ProblemDistribution(train_bank, cfg.episode)
    rng = Rng(cfg.seed).spawn("train")
    embedding = EmbeddingSpec(cfg.clustering.embedding)
    out = Path(args.out)
    log_path = Path(args.log) if args.log else default_log_path(out)
    logger.info("training %s on %d meta-train classes", method.value, train_bank.num_classes)

    with RunLog(log_path) as runlog:
        if method is TrainMethod.SINGLE_MAML:
            learner = train_single_maml(dist, cfg.learner, cfg.meta.maml(), rng, runlog)
            ckpt = Checkpoint(
                method=method,
                config=cfg,
                learners=(learner,),
                tcfg=cfg.learner.train_config(),
                embedding=embedding,
                seed=cfg.seed,
                seed_source=_seed_source(),
            )
        else:
            if method is TrainMethod.E2E:
                warm = None
                if args.warm_start:
                    warm = load_checkpoint(args.warm_start).model()
                    if warm is None:
                        raise CheckpointError(
                            f"warm-start checkpoint {args.warm_start} has no aggregator"
                        )
                model = train_end_to_end(
                    dist, cfg.meta, cfg.learner, rng, cfg.aggregator, embedding, warm, runlog
                )
            elif method is TrainMethod.THREE_STEP:
                model = train_three_step(
                    dist,
                    cfg.meta,
                    cfg.learner,
                    cfg.clustering,
                    rng,
                    cfg.aggregator,
                    cfg.aggregator_maml(),
                    threads=args.threads,
                    on_step=runlog,
                )
            else:
                learners = train_baseline_ensemble(
                    dist, cfg.meta.k, cfg.learner, cfg.meta.maml(), rng, runlog
                )
                model = train_whole_data_aggregator(
                    dist,
                    learners,
                    cfg.learner,
                    cfg.aggregator,
                    cfg.aggregator_maml(),
                    rng.spawn("whole-data"),
                    embedding,
                    runlog,
                )
            ckpt = Checkpoint.from_model(method, cfg, model, _seed_source())

    save_checkpoint(ckpt, out)
    logger.info("wrote checkpoint %s (k=%d) and run log %s", out, ckpt.k, log_path)
    return 0


def _parse_methods(text: str) -> List[MethodId]:
    methods = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            methods.append(MethodId(item))
        except ValueError:
            known = ", ".join(m.value for m in MethodId)
            raise ConfigError(f"unknown method {item!r} (known: {known})") from None
    if not methods:
        raise ConfigError("--methods lists no methods")
    return methods


def resolve_predictors(
    checkpoints: Sequence[Checkpoint], methods: Sequence[MethodId], feature_dim: int
) -> List[Tuple[Predictor, Checkpoint]]:
    """Pick, per method, the first checkpoint able to serve it. Runs before any sampling."""
    for ckpt in checkpoints:
        if ckpt.feature_dim != feature_dim:
            raise ConfigError(
                f"checkpoint expects feature_dim {ckpt.feature_dim}, "
                f"meta-test data has {feature_dim}"
            )
    out = []
    for method in methods:
        reasons = []
        for ckpt in checkpoints:
            reason = ckpt.unsupported_reason(method)
            if reason is None:
                out.append((ckpt.predictor(method, FitCache()), ckpt))
                break
            reasons.append(reason)
        else:
            raise ConfigError(f"no checkpoint can evaluate {method.value}: {'; '.join(reasons)}")
    return out


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = load_experiment_config(args.config)
    methods = _parse_methods(args.methods)
    checkpoints = [load_checkpoint(p) for p in args.checkpoint]
    _, test_bank = load_banks(cfg)
    resolved = resolve_predictors(checkpoints, methods, test_bank.feature_dim)

    n_problems = args.n_problems or cfg.eval.n_problems
    root = Rng(cfg.seed)
    reports: List[EvalReport] = []
    for predictor, ckpt in resolved:
        if args.fiveway:
            report = evaluate_fiveway(
                predictor,
                test_bank,
                cfg.eval.fiveway_episodes,
                root.spawn("fiveway"),
                k=ckpt.k,
                seed=cfg.seed,
                threads=args.threads,
            )
        else:
            report = evaluate(
                predictor,
                test_bank,
                cfg.episode,
                n_problems,
                root.spawn("eval"),
                k=ckpt.k,
                seed=cfg.seed,
                threads=args.threads,
            )
        reports.append(report)

    write_report(args.out, reports)
    logger.info("wrote %d report rows to %s", len(reports), args.out)
    return 0


def _load_spec(path: str) -> ModalMixtureSpec:
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read spec file {p}: {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"spec file {p} is not valid JSON: {e}") from e
    try:
        return ModalMixtureSpec.model_validate(data)
    except ValidationError as e:
        fields = ", ".join(".".join(str(x) for x in err["loc"]) for err in e.errors())
        raise ConfigError(f"invalid modal spec in {p}: {fields}") from e


def cmd_make_data(args: argparse.Namespace) -> int:
    spec = _load_spec(args.spec)
    seed = apply_seed_override(ExperimentConfig()).seed
    train_bank, test_bank, mode_of = generate_modal_bank(spec, Rng(seed).spawn("data"))
    if test_bank.num_classes == 0:
        raise ConfigError("meta_test_fraction leaves no meta-test classes to write")

    prefix = args.out
    save_feature_bank(train_bank, f"{prefix}.train.mmfb")
    save_feature_bank(test_bank, f"{prefix}.test.mmfb")
    modes_path = Path(f"{prefix}.modes.json")
    modes_path.write_text(
        json.dumps({str(c): m for c, m in sorted(mode_of.items())}, indent=2) + "\n",
        encoding="utf-8",
    )
    logger.info(
        "wrote %s.{train,test}.mmfb (%d / %d classes) and %s",
        prefix,
        train_bank.num_classes,
        test_bank.num_classes,
        modes_path,
    )
    return 0
