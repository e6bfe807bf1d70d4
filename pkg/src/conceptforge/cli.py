"""Command-line entry point wiring the pipeline modules together.

Every command reads the shared JSON config (flag overrides win), records
the effective config in its output's .meta.json sidecar, and is replayable:
same config + seed + inputs produce byte-identical manifests. ``--mock``
swaps all service clients for deterministic offline mocks.
"""

from __future__ import annotations

import json
import sys

import click

from . import __version__
from .clients import ClientBundle
from .config import PipelineConfig, load_config, require_paths
from .datagen import (
    StockImages,
    assemble_examples,
    examples_from_records,
    write_review_checklist,
)
from .embeddings import load_embeddings_file
from .errors import ConceptForgeError
from .evalharness import (
    EvalItem,
    aggregate,
    inter_annotator,
    load_annotations_csv,
    render_report,
    report_to_dict,
    run_eval,
)
from .manifest import read_jsonl, write_jsonl, write_meta
from .metrics import build_proximity_matrix, distribution_summary, load_matrix, save_matrix
from .ontology import load_ontology_file, validate
from .prompts import build_inference_prompt
from .sampler import (
    extremes,
    pair_records,
    pairs_from_records,
    sample_uniform_spectrum,
    select_test,
    split_curriculum,
)
from .trainer import (
    GAMMA_GRID,
    HashLatents,
    NoiseSchedule,
    StageSet,
    ToyDenoiser,
    TrainItem,
    TripletBatch,
    grad_check,
    train_curriculum,
    write_trace_csv,
)

_CONFIG_KEY = "cfg"
_JSON_KEY = "json_errors"


def _fail(ctx_obj: dict, exc: Exception) -> None:
    if ctx_obj.get(_JSON_KEY):
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
    else:
        sys.stderr.write(f"error: {exc}\n")
    sys.exit(1)


def _load_cfg(ctx) -> PipelineConfig:
    return ctx.obj[_CONFIG_KEY]


@click.group()
@click.version_option(__version__)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON pipeline config.")
@click.option("--ontology", "ontology_path", type=click.Path(), default=None)
@click.option("--embeddings", "embeddings_path", type=click.Path(), default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None, help="Global seed override.")
@click.option("--mock/--no-mock", default=None, help="Use offline deterministic clients.")
@click.option("--json", "json_errors", is_flag=True, help="Machine-readable errors on stderr.")
@click.pass_context
def main(ctx, config_path, ontology_path, embeddings_path, out_dir, seed, mock, json_errors):
    """Affordance-composition design pipeline."""
    overrides = {
        "ontology": ontology_path,
        "embeddings": embeddings_path,
        "out": out_dir,
    }
    if seed is not None:
        overrides["seed"] = seed
    if mock is not None:
        overrides["mock"] = mock
    try:
        cfg = load_config(config_path, overrides)
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as e:
        sys.stderr.write(f"error: bad config: {e}\n")
        sys.exit(1)
    ctx.obj = {_CONFIG_KEY: cfg, _JSON_KEY: json_errors}


# ---------------------------------------------------------------------------
# ontology
# ---------------------------------------------------------------------------

@main.group()
def ontology():
    """Ontology inspection."""


@ontology.command("validate")
@click.argument("file", type=click.Path(exists=True))
@click.pass_context
def ontology_validate(ctx, file):
    """Validate FILE and print the report; exit nonzero on errors."""
    try:
        o = load_ontology_file(file)
    except ConceptForgeError as e:
        _fail(ctx.obj, e)
    report = validate(o)
    payload = {
        "stats": report.stats,
        "errors": [list(e) for e in report.errors],
        "warnings": [list(w) for w in report.warnings],
        "is_valid": report.is_valid,
    }
    click.echo(json.dumps(payload, indent=2, sort_keys=True))
    if not report.is_valid:
        sys.exit(1)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@main.group()
def metrics():
    """Proximity computation."""


@metrics.command("build")
@click.option("--parallelism", type=int, default=1, show_default=True)
@click.pass_context
def metrics_build(ctx, parallelism):
    """Score all affordance pairs; cache the matrix and plot the spectrum."""
    cfg = _load_cfg(ctx)
    try:
        require_paths(cfg, "ontology_path", "embeddings_path")
        o = load_ontology_file(cfg.ontology_path)
        report = validate(o)
        if not report.is_valid:
            raise ConceptForgeError(f"ontology invalid: {report.errors[:3]}")
        store = load_embeddings_file(cfg.embeddings_path)
        matrix = build_proximity_matrix(o, store, cfg.distance, parallelism=parallelism)
    except (ConceptForgeError, FileNotFoundError) as e:
        _fail(ctx.obj, e)

    out = cfg.out("proximity.npz")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_matrix(matrix, out)
    summary = distribution_summary(matrix)
    with open(cfg.out("proximity_summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(cfg.out("proximity_deciles.csv"), "w", encoding="utf-8") as fh:
        fh.write("quantile,proximity\n")
        for q, v in summary["deciles"].items():
            fh.write(f"{q},{v!r}\n")
    from .figures import save_histogram

    save_histogram(
        matrix.values(), cfg.out("figures", "proximity_hist.png"),
        title="Affordance pair proximity spectrum", xlabel="proximity",
    )
    write_meta(out, cfg.meta({"pairs": summary["pairs"], "excluded": summary["excluded"]}))
    # soft diagnostic: production-scale spectra usually span roughly 0.1..1.0
    if summary["min"] > 0.2 or summary["max"] < 0.9 or summary["max"] > 1.1:
        click.echo(
            f"note: proximity spectrum spans [{summary['min']:.3f}, {summary['max']:.3f}] "
            "(reference span is roughly [0.1, 1.0])",
            err=True,
        )
    click.echo(json.dumps({"pairs": summary["pairs"], "min": summary["min"],
                           "max": summary["max"]}, sort_keys=True))


def _load_matrix(cfg: PipelineConfig):
    path = cfg.out("proximity.npz")
    if not path.exists():
        raise FileNotFoundError(f"no proximity cache at {path}; run `metrics build` first")
    return load_matrix(path, cfg.distance)


# ---------------------------------------------------------------------------
# sampling / curriculum
# ---------------------------------------------------------------------------

@main.group()
def sample():
    """Pair sampling."""


@sample.command("train")
@click.pass_context
def sample_train(ctx):
    """Draw the training pairs uniformly across the proximity spectrum."""
    cfg = _load_cfg(ctx)
    try:
        matrix = _load_matrix(cfg)
        pairs, meta = sample_uniform_spectrum(matrix, cfg.plan)
    except (ConceptForgeError, FileNotFoundError) as e:
        _fail(ctx.obj, e)
    path = cfg.out("pairs_train.jsonl")
    write_jsonl(path, pair_records(pairs, "train", cfg.plan))
    write_meta(path, cfg.meta({"sampling": meta}))
    click.echo(f"wrote {len(pairs)} training pairs to {path}")


@sample.command("test")
@click.option("--random", "random_mode", is_flag=True,
              help="Plain seeded draw instead of spectrum-uniform.")
@click.pass_context
def sample_test(ctx, random_mode):
    """Draw test pairs disjoint from the training pairs."""
    cfg = _load_cfg(ctx)
    try:
        matrix = _load_matrix(cfg)
        train_path = cfg.out("pairs_train.jsonl")
        exclude = pairs_from_records(read_jsonl(train_path)) if train_path.exists() else []
        pairs, meta = select_test(matrix, exclude, cfg.plan, random_mode=random_mode)
    except (ConceptForgeError, FileNotFoundError) as e:
        _fail(ctx.obj, e)
    path = cfg.out("pairs_test.jsonl")
    write_jsonl(path, pair_records(pairs, "test", cfg.plan))
    write_meta(path, cfg.meta({"sampling": meta, "excluded_pairs": len(exclude)}))
    click.echo(f"wrote {len(pairs)} test pairs to {path}")


@sample.command("extremes")
@click.option("-k", type=int, default=100, show_default=True)
@click.pass_context
def sample_extremes(ctx, k):
    """Closest / most distant k among the test pairs."""
    cfg = _load_cfg(ctx)
    try:
        candidates = pairs_from_records(read_jsonl(cfg.out("pairs_test.jsonl")))
        closest, farthest = extremes(candidates, k)
    except (ConceptForgeError, FileNotFoundError) as e:
        _fail(ctx.obj, e)
    for name, pairs in (("closest", closest), ("farthest", farthest)):
        path = cfg.out(f"extremes_{name}.jsonl")
        write_jsonl(path, pair_records(pairs, "test", cfg.plan))
        write_meta(path, cfg.meta({"k": k, "kind": name}))
    click.echo(f"wrote 2x{k} extreme pairs")


@main.group()
def curriculum():
    """Curriculum staging."""


@curriculum.command("build")
@click.pass_context
def curriculum_build(ctx):
    """Split the training pairs into the three proximity stages."""
    cfg = _load_cfg(ctx)
    try:
        pairs = pairs_from_records(read_jsonl(cfg.out("pairs_train.jsonl")))
        stages = split_curriculum(pairs)
    except (ConceptForgeError, FileNotFoundError, ValueError) as e:
        _fail(ctx.obj, e)
    stage_of = {p.key: st.index for st in stages for p in st.pairs}
    path = cfg.out("curriculum.jsonl")
    write_jsonl(path, pair_records(pairs, "train", cfg.plan, stage_of=stage_of))
    write_meta(
        path,
        cfg.meta(
            {
                "stages": [
                    {
                        "index": st.index,
                        "pairs": len(st.pairs),
                        "proximity_band": list(st.proximity_band),
                    }
                    for st in stages
                ]
            }
        ),
    )
    sizes = "/".join(str(len(st.pairs)) for st in stages)
    click.echo(f"stages {sizes} -> {path}")


# ---------------------------------------------------------------------------
# datagen
# ---------------------------------------------------------------------------

def _stages_from_curriculum(cfg: PipelineConfig):
    from .sampler import AffordancePair, CurriculumStage

    records = read_jsonl(cfg.out("curriculum.jsonl"))
    by_stage: dict[int, list[AffordancePair]] = {}
    for rec in records:
        by_stage.setdefault(int(rec["stage"]), []).append(
            AffordancePair(rec["a"], rec["b"], float(rec["proximity"]))
        )
    return [
        CurriculumStage(index=i, pairs=by_stage[i],
                        proximity_band=(min(p.proximity for p in by_stage[i]),
                                        max(p.proximity for p in by_stage[i])))
        for i in sorted(by_stage)
    ]


def _clients(cfg: PipelineConfig) -> ClientBundle:
    if cfg.mock:
        return ClientBundle.mock(n_captions=cfg.datagen.n_captions)
    raise ConceptForgeError(
        "no live clients configured; run with --mock or plug in fixture clients"
    )


def _stock(cfg: PipelineConfig) -> StockImages:
    if cfg.stock_images_path:
        return StockImages.from_jsonl(cfg.stock_images_path)
    if cfg.mock:
        return StockImages(mock_count=cfg.datagen.stock_images_per_concept)
    raise ConceptForgeError("no stock image manifest configured")


def _datagen_phase(ctx, phase: str, review: bool = False, mock_flag: bool = False):
    cfg = _load_cfg(ctx)
    if mock_flag:
        cfg.mock = True
    try:
        require_paths(cfg, "ontology_path")
        o = load_ontology_file(cfg.ontology_path)
        stages = _stages_from_curriculum(cfg)
        records = assemble_examples(
            stages,
            o,
            _clients(cfg),
            cfg.datagen,
            cfg.out("examples.jsonl"),
            stock=_stock(cfg),
            phases=(phase,),
        )
    except (ConceptForgeError, FileNotFoundError) as e:
        _fail(ctx.obj, e)
    write_meta(cfg.out("examples.jsonl"), cfg.meta({"phase": phase}))
    if review and phase == "images":
        write_review_checklist(records, cfg.out("review_checklist.md"))
        click.echo(f"review checklist -> {cfg.out('review_checklist.md')}")
    field = {"captions": "captions", "images": "positives", "curate": "negatives"}[phase]
    filled = sum(1 for r in records if r.get(field) is not None)
    done = sum(1 for r in records if r["status"] == "done")
    failed = sum(1 for r in records if r["status"] == "failed")
    click.echo(
        f"{phase}: {filled}/{len(records)} pairs filled "
        f"({done} fully assembled, {failed} failed)"
    )


@main.group()
def datagen():
    """Training-example construction."""


@datagen.command("captions")
@click.option("--mock", "mock_flag", is_flag=True, help="Use offline deterministic clients.")
@click.pass_context
def datagen_captions(ctx, mock_flag):
    """Request and parse candidate captions per pair."""
    _datagen_phase(ctx, "captions", mock_flag=mock_flag)


@datagen.command("images")
@click.option("--review", is_flag=True, help="Emit a human-confirmation checklist.")
@click.option("--mock", "mock_flag", is_flag=True, help="Use offline deterministic clients.")
@click.pass_context
def datagen_images(ctx, review, mock_flag):
    """Generate candidate images and keep the top-k by scorer."""
    _datagen_phase(ctx, "images", review=review, mock_flag=mock_flag)


@datagen.command("curate")
@click.option("--mock", "mock_flag", is_flag=True, help="Use offline deterministic clients.")
@click.pass_context
def datagen_curate(ctx, mock_flag):
    """Curate per-concept negative image sets."""
    _datagen_phase(ctx, "curate", mock_flag=mock_flag)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _train_items(cfg: PipelineConfig) -> list[StageSet]:
    examples = examples_from_records(read_jsonl(cfg.out("examples.jsonl")))
    by_stage: dict[int, list[TrainItem]] = {}
    for ex in examples:
        item = TrainItem.build(
            item_id=f"{ex.pair.a}--{ex.pair.b}",
            condition_terms=(ex.pair.a, ex.pair.b),
            positive_refs=[c.image_ref for c in ex.positives],
            negatives=ex.negatives,
        )
        by_stage.setdefault(ex.stage, []).append(item)
    return [StageSet(index=i, items=by_stage[i]) for i in sorted(by_stage)]


@main.command("train")
@click.option("--shuffled", is_flag=True, help="Pool all stages (no-curriculum ablation).")
@click.option("--gamma", type=float, default=None, help="Override the repulsion weight.")
@click.option("--gamma-grid", is_flag=True, help="Sweep the standard gamma grid.")
@click.option("--grad-check", "do_grad_check", is_flag=True,
              help="Verify analytic gradients before training.")
@click.option("--lr", type=float, default=None, help="Override the learning rate.")
@click.pass_context
def train(ctx, shuffled, gamma, gamma_grid, do_grad_check, lr):
    """Curriculum training on the toy denoiser; checkpoints + loss traces."""
    import dataclasses

    cfg = _load_cfg(ctx)
    tc = cfg.train
    if gamma is not None:
        tc = dataclasses.replace(tc, gamma=gamma)
    if lr is not None:
        tc = dataclasses.replace(tc, learning_rate=lr)
    try:
        stage_sets = _train_items(cfg)
        if not stage_sets:
            raise ConceptForgeError("no completed training examples; run datagen first")
        schedule = NoiseSchedule.linear()

        if do_grad_check:
            model = ToyDenoiser.init(seed=tc.seed)
            latents = HashLatents(model.latent_dim)
            probe = stage_sets[0].items[0]
            batch = TripletBatch(
                positive=latents.latent(probe.positive_refs[0]),
                negative=latents.latent(probe.negative_refs[0][1][0]),
                condition=latents.latent("cond-probe")[: model.cond_dim],
            )
            err = grad_check(model, batch, schedule, tc.gamma)
            click.echo(f"grad check max relative error: {err:.3e}")

        gammas = list(GAMMA_GRID) if gamma_grid else [tc.gamma]
        for g in gammas:
            run_cfg = dataclasses.replace(tc, gamma=g)
            result = train_curriculum(stage_sets, run_cfg, schedule=schedule, shuffled=shuffled)
            tag = f"gamma{g:g}" + ("_shuffled" if shuffled else "")
            trace_path = cfg.out(f"loss_trace_{tag}.csv") if gamma_grid else cfg.out("loss_trace.csv")
            write_trace_csv(result.trace, trace_path)
            write_meta(trace_path, cfg.meta({"gamma": g, "shuffled": shuffled,
                                             "steps": len(result.trace)}))
            for ckpt in result.checkpoints:
                ckpt.save(cfg.out("checkpoints", f"{tag}_stage{ckpt.stage}.json"))
            from .figures import save_loss_curves

            save_loss_curves(result.trace, cfg.out("figures", f"loss_{tag}.png"))
            click.echo(
                f"gamma={g:g} shuffled={shuffled}: {len(result.trace)} steps, "
                f"final loss {result.trace[-1]['loss']:.4f} -> {trace_path}"
            )
    except (ConceptForgeError, FileNotFoundError) as e:
        _fail(ctx.obj, e)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@main.group("eval")
def eval_group():
    """Judge-based evaluation."""


@eval_group.command("run")
@click.option("--mode", type=click.Choice(["absolute", "relative"]), default="absolute",
              show_default=True)
@click.option("--items", "items_path", type=click.Path(exists=True), default=None,
              help="JSONL of {item_id, prompt, image[, image_b][, model]}.")
@click.option("--retries", type=int, default=3, show_default=True)
@click.option("--mock", "mock_flag", is_flag=True, help="Use the offline deterministic judge.")
@click.pass_context
def eval_run(ctx, mode, items_path, retries, mock_flag):
    """Judge every test item; resumable manifest under eval/."""
    cfg = _load_cfg(ctx)
    if mock_flag:
        cfg.mock = True
    try:
        require_paths(cfg, "ontology_path")
        o = load_ontology_file(cfg.ontology_path)
        if items_path:
            raw_items = read_jsonl(items_path)
            items = [EvalItem(item_id=r["item_id"], prompt=r["prompt"], image=r["image"],
                              image_b=r.get("image_b"), model=r.get("model")) for r in raw_items]
        else:
            pairs = pairs_from_records(read_jsonl(cfg.out("pairs_test.jsonl")))
            items = []
            for p in pairs:
                prompt = build_inference_prompt(
                    [o.affordance_name(p.a), o.affordance_name(p.b)]
                )
                image = f"mock://gen/{p.a}--{p.b}"
                image_b = f"mock://ref/{p.a}--{p.b}" if mode == "relative" else None
                items.append(EvalItem(item_id=f"{p.a}--{p.b}", prompt=prompt,
                                      image=image, image_b=image_b))
        if not cfg.mock:
            raise ConceptForgeError("no live judge configured; run with --mock")
        from .clients import MockJudgeClient

        judge = MockJudgeClient()
        records = run_eval(items, judge, mode=mode, retries=retries,
                           manifest_path=cfg.out("eval", f"manifest_{mode}.jsonl"))
    except (ConceptForgeError, FileNotFoundError) as e:
        _fail(ctx.obj, e)
    write_meta(cfg.out("eval", f"manifest_{mode}.jsonl"), cfg.meta({"mode": mode}))
    ok = sum(1 for r in records if r.get("scores") or r.get("choice"))
    click.echo(f"judged {ok}/{len(records)} items ({mode})")


@eval_group.command("report")
@click.option("--mode", type=click.Choice(["absolute", "relative"]), default="absolute",
              show_default=True)
@click.pass_context
def eval_report(ctx, mode):
    """Aggregate the eval manifest into JSON + text table + figure."""
    cfg = _load_cfg(ctx)
    try:
        records = read_jsonl(cfg.out("eval", f"manifest_{mode}.jsonl"))
        report = aggregate(records)
    except (ConceptForgeError, FileNotFoundError) as e:
        _fail(ctx.obj, e)
    with open(cfg.out("eval", f"report_{mode}.json"), "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    text = render_report(report)
    with open(cfg.out("eval", f"report_{mode}.txt"), "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    if report.mode == "absolute":
        from .figures import save_metric_bars

        save_metric_bars(report.means, cfg.out("figures", "eval_absolute.png"),
                         title="Judge scores (absolute)")
    else:
        from .figures import save_win_tie_loss

        save_win_tie_loss(report, cfg.out("figures", "eval_relative.png"),
                          title="Win / tie / loss vs reference")
    click.echo(text)


@eval_group.command("iaa")
@click.argument("annotations", type=click.Path(exists=True))
@click.option("--weights", type=click.Choice(["linear"]), default=None,
              help="Weighted kappa variant (default unweighted).")
@click.pass_context
def eval_iaa(ctx, annotations, weights):
    """Inter-annotator agreement from an annotation CSV."""
    try:
        pairs = load_annotations_csv(annotations)
        report = inter_annotator(pairs, weights=weights)
    except (ConceptForgeError, ValueError) as e:
        _fail(ctx.obj, e)
    click.echo(
        json.dumps(
            {
                "n_items": report.n_items,
                "percent_agreement": report.percent_agreement,
                "kappa": report.kappa,
            },
            indent=2,
            sort_keys=True,
        )
    )


# ---------------------------------------------------------------------------
# inference prompt
# ---------------------------------------------------------------------------

@main.command("prompt")
@click.argument("affordances", nargs=-1, required=True)
def prompt_cmd(affordances):
    """Render the inference prompt for the given affordance names."""
    click.echo(build_inference_prompt(list(affordances)))


if __name__ == "__main__":
    main()
