"""Batch command line.

Exit status: 0 success, 1 if any item failed, 2 on usage errors. Items are
processed in lexicographic filename order and results are written in that
order whatever ``--jobs`` is.
"""

from __future__ import annotations

import csv
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import attention as attn
from .adaptation import cycle_loss, full_objective, gan_loss
from .detect import connected_components, load_mask, save_mask, segment
from .disparity import (DEFAULT_SCALE, load_disparity, load_transformed, read_raw,
                        save_disparity, save_transformed, save_vdisp_csv, save_vdisp_pgm,
                        v_disparity, write_image)
from .metrics import confusion, fsc_iou, mean_metrics
from .synth import draw_scene, format_scene, generate, generate_rgb_standin, read_scene_file
from .transform import SolverConfig, fit_road_model, transform

log = logging.getLogger("potholedt")

RASTER_EXTS = (".png", ".pgm")
MODEL_FIELDS = ["image", "phi", "varkappa", "kappa", "lambda", "cost", "method"]
SPLITS = ("training", "validation", "testing")


def fmt(x) -> str:
    """17 significant digits, enough to round-trip a double."""
    return f"{float(x):.17g}"


def list_rasters(path) -> list[Path]:
    path = Path(path)
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise click.BadParameter(f"{path} does not exist")
    return sorted(p for p in path.iterdir() if p.suffix.lower() in RASTER_EXTS)


def run_items(fn, items, jobs: int) -> list:
    """``[fn(x) for x in items]``, optionally across processes, in input order."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=1))


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _finish(failures: int) -> None:
    if failures:
        log.error("%d item(s) failed", failures)
        sys.exit(1)


jobs_option = click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True,
                           help="Worker processes.")
scale_option = click.option("--scale", type=float, default=DEFAULT_SCALE, show_default=True,
                            help="Disparity per raw raster unit.")


@click.group()
@click.option("-v", "--verbose", count=True)
def main(verbose):
    """Road disparity transformation and pothole detection tools."""
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(message)s")
    log.setLevel(level)


# --------------------------------------------------------------------------
# transform


def _transform_one(args):
    path, out_dir, scale, cfg = args
    stem = path.stem
    try:
        img = load_disparity(path, scale)
        report = fit_road_model(img, cfg)
        m = report.model
        save_transformed(transform(img, m), out_dir / f"{stem}.png")
        sidecar = [f"image={path.name}", f"phi={fmt(m.phi)}", f"varkappa={fmt(m.varkappa)}",
                   f"kappa={fmt(m.kappa)}", f"lambda={fmt(m.lam)}",
                   f"cost={fmt(report.solution.cost)}", f"method={report.solution.method}",
                   f"n_pixels={report.n_used}", f"fallback={int(report.fallback)}"]
        (out_dir / f"{stem}.model.txt").write_text("\n".join(sidecar) + "\n")
        row = [stem, fmt(m.phi), fmt(m.varkappa), fmt(m.kappa), fmt(m.lam),
               fmt(report.solution.cost), report.solution.method]
        return stem, row, report.fallback, None
    except Exception as exc:  # reported per item, never aborts the batch
        return stem, None, False, f"{path}: {exc}"


@main.command("transform")
@click.argument("input_path", type=click.Path(exists=True, path_type=Path))
@click.option("-o", "--out", "out_dir", type=click.Path(path_type=Path), required=True)
@scale_option
@click.option("--grid-size", type=click.IntRange(min=16), default=1024, show_default=True)
@click.option("--tol", type=float, default=1e-13, show_default=True)
@click.option("--closed-form", is_flag=True, help="Closed-form angle, grid search on failure.")
@click.option("--robust-refit", is_flag=True,
              help="Refit once without pixels 3 MADs below the first plane.")
@jobs_option
def cmd_transform(input_path, out_dir, scale, grid_size, tol, closed_form, robust_refit, jobs):
    """Fit the road model per disparity image and write transformed images."""
    if not tol > 0:
        raise click.BadParameter("--tol must be positive")
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = SolverConfig(grid_size, tol, closed_form, robust_refit)
    paths = list_rasters(input_path)
    results = run_items(_transform_one, [(p, out_dir, scale, cfg) for p in paths], jobs)
    rows, failures = [], 0
    for stem, row, fallback, err in results:
        if err:
            failures += 1
            log.error("%s", err)
            continue
        if fallback:
            log.warning("%s: closed form unavailable, used grid search", stem)
        log.info("%s: phi=%s varkappa=%s kappa=%s lambda=%s cost=%s", stem, *row[1:6])
        rows.append(row)
    _write_csv(out_dir / "models.csv", MODEL_FIELDS, rows)
    click.echo(f"transformed {len(rows)}/{len(paths)} image(s) -> {out_dir}")
    _finish(failures)


# --------------------------------------------------------------------------
# vdisp


def _vdisp_one(args):
    path, out_dir, scale, bin_width = args
    try:
        hist = v_disparity(load_disparity(path, scale), bin_width)
        save_vdisp_pgm(hist, out_dir / f"{path.stem}.vdisp.pgm")
        save_vdisp_csv(hist, out_dir / f"{path.stem}.vdisp.csv")
        return path.stem, hist.total(), None
    except Exception as exc:
        return path.stem, 0, f"{path}: {exc}"


@main.command("vdisp")
@click.argument("input_path", type=click.Path(exists=True, path_type=Path))
@click.option("-o", "--out", "out_dir", type=click.Path(path_type=Path), required=True)
@scale_option
@click.option("--bin-width", type=click.FloatRange(min=0, min_open=True), default=1.0,
              show_default=True)
@jobs_option
def cmd_vdisp(input_path, out_dir, scale, bin_width, jobs):
    """Write the v-disparity histogram of each image as PGM and CSV."""
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = list_rasters(input_path)
    results = run_items(_vdisp_one, [(p, out_dir, scale, bin_width) for p in paths], jobs)
    failures = 0
    for stem, total, err in results:
        if err:
            failures += 1
            log.error("%s", err)
        else:
            log.info("%s: %d pixels binned", stem, total)
    click.echo(f"v-disparity for {len(paths) - failures}/{len(paths)} image(s) -> {out_dir}")
    _finish(failures)


# --------------------------------------------------------------------------
# detect


def _detect_one(args):
    path, out_dir, scale, min_area = args
    try:
        mask = segment(load_transformed(path, scale), min_area)
        save_mask(mask, out_dir / f"{path.stem}.png")
        return path.stem, [path.stem, len(connected_components(mask)),
                           int(mask.sum())], None
    except Exception as exc:
        return path.stem, None, f"{path}: {exc}"


@main.command("detect")
@click.argument("tdisp_path", type=click.Path(exists=True, path_type=Path))
@click.option("-o", "--out", "out_dir", type=click.Path(path_type=Path), required=True)
@scale_option
@click.option("--min-area", type=click.IntRange(min=1), default=50, show_default=True)
@jobs_option
def cmd_detect(tdisp_path, out_dir, scale, min_area, jobs):
    """Otsu threshold + component filter on transformed disparity images."""
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = list_rasters(tdisp_path)
    results = run_items(_detect_one, [(p, out_dir, scale, min_area) for p in paths], jobs)
    rows, failures = [], 0
    for stem, row, err in results:
        if err:
            failures += 1
            log.error("%s", err)
        else:
            rows.append(row)
    _write_csv(out_dir / "detections.csv", ["image", "n_components", "pothole_pixels"], rows)
    click.echo(f"masks for {len(rows)}/{len(paths)} image(s) -> {out_dir}")
    _finish(failures)


# --------------------------------------------------------------------------
# eval


def _eval_one(args):
    stem, pred_path, gt_path = args
    try:
        c = confusion(load_mask(pred_path), load_mask(gt_path))
        return stem, c, fsc_iou(c), None
    except Exception as exc:
        return stem, None, None, f"{pred_path} vs {gt_path}: {exc}"


@main.command("eval")
@click.argument("pred_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("gt_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("-o", "--out", "out_csv", type=click.Path(path_type=Path), required=True,
              help="Per-image CSV.")
@click.option("--summary", "summary_csv", type=click.Path(path_type=Path),
              help="Summary CSV [default: <out>_summary.csv].")
@jobs_option
def cmd_eval(pred_dir, gt_dir, out_csv, summary_csv, jobs):
    """Per-image F-score/IoU and their means; files matched by stem."""
    gts = {p.stem: p for p in list_rasters(gt_dir)}
    preds = {p.stem: p for p in list_rasters(pred_dir)}
    failures = 0
    for stem in sorted(set(gts) - set(preds)):
        log.error("%s: no prediction for ground truth %s", pred_dir, gts[stem])
        failures += 1
    items = [(s, preds[s], gts[s]) for s in sorted(gts) if s in preds]
    results = run_items(_eval_one, items, jobs)
    rows, metrics = [], []
    for stem, c, m, err in results:
        if err:
            failures += 1
            log.error("%s", err)
            continue
        metrics.append(m)
        rows.append([stem, c.tp, c.fp, c.fn, c.tn, fmt(m.fsc), fmt(m.iou)])
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out_csv, ["image", "tp", "fp", "fn", "tn", "fsc", "iou"], rows)
    if summary_csv is None:
        summary_csv = out_csv.with_name(out_csv.stem + "_summary.csv")
    if metrics:
        mfsc, miou = mean_metrics(metrics)
        _write_csv(summary_csv, ["mFsc", "mIoU", "n_images"], [[fmt(mfsc), fmt(miou), len(metrics)]])
        click.echo(f"mFsc={mfsc:.6f} mIoU={miou:.6f} over {len(metrics)} image(s)")
    else:
        log.error("nothing to evaluate")
        failures += 1
    _finish(failures)


# --------------------------------------------------------------------------
# synth


def _synth_one(args):
    i, spec, root, scale = args
    stem = f"scene_{i:04d}"
    try:
        scene = generate(spec)
        top = float(np.nanmax(scene.image.values))
        if top > 65535 * scale:
            raise ValueError(f"disparity {top:.1f} exceeds the 16-bit range at scale {scale}")
        save_disparity(scene.image, root / "disp" / f"{stem}.png", scale)
        save_mask(scene.mask, root / "label" / f"{stem}.png")
        rgb = generate_rgb_standin(scene.image, scene.mask, spec.seed)
        write_image(rgb, root / "rgb" / f"{stem}.png")
        m = scene.model
        return stem, [stem, fmt(m.phi), fmt(m.varkappa), fmt(m.kappa), fmt(m.lam),
                      int(scene.mask.sum())], None
    except Exception as exc:
        return stem, None, f"scene {i} (seed {spec.seed}): {exc}"


def _float_pair(ctx, param, value):
    if value is None:
        return None
    lo, hi = value
    if hi < lo:
        raise click.BadParameter("range must be ascending")
    return value


@main.command("synth")
@click.option("-o", "--out", "root", type=click.Path(path_type=Path), required=True,
              help="Dataset root.")
@click.option("--split", type=click.Choice(SPLITS), default="testing", show_default=True)
@click.option("--spec-file", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="One key=value scene per line; overrides the generator flags.")
@click.option("--count", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--width", type=click.IntRange(min=2), default=640, show_default=True)
@click.option("--height", type=click.IntRange(min=2), default=480, show_default=True)
@click.option("--phi-range", nargs=2, type=float, default=(-0.05, 0.05), show_default=True,
              callback=_float_pair)
@click.option("--varkappa-range", nargs=2, type=float, default=(0.1, 0.3), show_default=True,
              callback=_float_pair)
@click.option("--kappa-range", nargs=2, type=float, default=(20.0, 300.0), show_default=True,
              callback=_float_pair)
@click.option("--n-potholes", nargs=2, type=int, default=(1, 3), show_default=True)
@click.option("--axis-range", nargs=2, type=float, default=(15.0, 40.0), show_default=True,
              callback=_float_pair)
@click.option("--depth-range", nargs=2, type=float, default=(5.0, 10.0), show_default=True,
              callback=_float_pair)
@click.option("--profile", type=click.Choice(["flat", "paraboloid"]), default="flat",
              show_default=True)
@click.option("--noise-sigma", type=click.FloatRange(min=0), default=0.0, show_default=True)
@click.option("--invalid-fraction", type=click.FloatRange(0, 1, max_open=True), default=0.0,
              show_default=True)
@scale_option
@jobs_option
def cmd_synth(root, split, spec_file, count, seed, width, height, phi_range, varkappa_range,
              kappa_range, n_potholes, axis_range, depth_range, profile, noise_sigma,
              invalid_fraction, scale, jobs):
    """Write synthetic rgb/disp/label triplets plus scene specs and ground truth."""
    if spec_file is not None:
        try:
            specs = read_scene_file(spec_file)
        except ValueError as exc:
            log.error("%s", exc)
            sys.exit(1)
    else:
        seeds = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint32)
        try:
            specs = [draw_scene(int(s), width, height, phi_range, varkappa_range, kappa_range,
                                n_potholes, axis_range, depth_range, profile, noise_sigma,
                                invalid_fraction) for s in seeds]
        except ValueError as exc:
            raise click.UsageError(str(exc)) from exc
    out = root / split
    for sub in ("rgb", "disp", "label"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    (out / "scenes.txt").write_text("".join(format_scene(s) + "\n" for s in specs))
    results = run_items(_synth_one, [(i, s, out, scale) for i, s in enumerate(specs)], jobs)
    rows, failures = [], 0
    for stem, row, err in results:
        if err:
            failures += 1
            log.error("%s", err)
        else:
            rows.append(row)
    _write_csv(out / "ground_truth.csv",
               ["image", "phi", "varkappa", "kappa", "lambda", "pothole_pixels"], rows)
    click.echo(f"wrote {len(rows)} scene(s) -> {out}")
    _finish(failures)


# --------------------------------------------------------------------------
# attn-demo


@main.command("attn-demo")
@click.option("--scheme", default=str(attn.BEST_SCHEME), show_default=True,
              help="Five comma-separated levels from CAM, PAM, DAM or '-'.")
@click.option("--dims", nargs=4, type=click.IntRange(min=1), default=(1, 16, 8, 8),
              show_default=True, help="N C H W of every level's feature map.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--gamma", type=float, default=0.5, show_default=True, help="DAM residual scales.")
@click.option("--input", "input_file", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Tensor file used as the feature map at every level.")
@click.option("--save", "save_dir", type=click.Path(file_okay=False, path_type=Path),
              help="Write each level's output tensor here.")
@click.option("--report", "report_csv", type=click.Path(dir_okay=False, path_type=Path),
              help="Write invariant checks as CSV.")
def cmd_attn_demo(scheme, dims, seed, gamma, input_file, save_dir, report_csv):
    """Run an attention-aggregation scheme on seeded tensors and check invariants."""
    try:
        sch = attn.AttentionScheme.parse(scheme)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--scheme") from exc
    if input_file is not None:
        try:
            x = attn.read_tensor(input_file)
        except (OSError, ValueError) as exc:
            log.error("%s", exc)
            sys.exit(1)
        feats = [x] * sch.n
    else:
        rng = np.random.default_rng(seed)
        feats = [rng.normal(size=dims) for _ in range(sch.n)]
    if "DAM" in sch.levels and feats[-1].shape[1] < 8:
        raise click.BadParameter("DAM needs C >= 8", param_hint="--dims")
    params = attn.random_params(sch, feats, seed + 1, gamma)
    rows, ok_all = [], True
    for i, (lv, f, p) in enumerate(zip(sch.levels, feats, params), 1):
        name = lv or "-"
        t0 = time.perf_counter()
        if lv == "DAM":
            y, a_pos, a_chan = attn.dam_forward(f, p, return_attention=True)
        elif lv == "CAM":
            y = attn.cam_forward(f, p)
        elif lv == "PAM":
            y = attn.pam_forward(f, p)
        else:
            y = f.copy()
        ms = (time.perf_counter() - t0) * 1e3
        checks = {"shape": y.shape == f.shape}
        if lv in ("CAM", "PAM"):
            checks["bounded"] = bool(np.all(np.abs(y) <= np.abs(f)))
        if lv == "DAM":
            checks["softmax_rows"] = bool(np.allclose(a_pos.sum(-1), 1, atol=1e-6, rtol=0)
                                          and np.allclose(a_chan.sum(-1), 1, atol=1e-6, rtol=0))
        ok = all(checks.values())
        ok_all &= ok
        desc = " ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items())
        click.echo(f"level {i} {name:>3}: {desc}  ({ms:.3f} ms)")
        rows.append([i, name, *("ok" if checks.get(k, True) else "FAIL"
                                for k in ("shape", "bounded", "softmax_rows")),
                     fmt(float(np.sum(y)))])
        if save_dir is not None:
            save_dir.mkdir(parents=True, exist_ok=True)
            attn.write_tensor(y, save_dir / f"level_{i}.bin")
    if report_csv is not None:
        _write_csv(report_csv, ["level", "module", "shape", "bounded", "softmax_rows", "sum"], rows)
    click.echo("all invariants hold" if ok_all else "invariant violations found")
    sys.exit(0 if ok_all else 1)


# --------------------------------------------------------------------------
# losses


def read_probabilities(path) -> np.ndarray:
    vals = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not row[0].strip():
                continue
            try:
                vals.append(float(row[0]))
            except ValueError:
                if lineno == 1:  # header
                    continue
                raise ValueError(f"{path}:{lineno}: not a number: {row[0]!r}") from None
    if not vals:
        raise ValueError(f"{path}: no probabilities")
    return np.array(vals)


def read_raster_batch(path) -> dict:
    files = list_rasters(path)
    if not files:
        raise ValueError(f"{path}: no rasters")
    return {p.stem: read_raw(p)[0].astype(np.float64) for p in files}


@main.command("losses")
@click.option("--gan", "gan_pairs", nargs=2, multiple=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="REAL.csv FAKE.csv discriminator outputs (repeat for each GAN term).")
@click.option("--cycle", "cycle_pairs", nargs=2, multiple=True,
              type=click.Path(exists=True, file_okay=False, path_type=Path),
              help="ORIGINAL_DIR RECONSTRUCTED_DIR (repeat per direction).")
@click.option("-o", "--out", "out_csv", type=click.Path(dir_okay=False, path_type=Path))
def cmd_losses(gan_pairs, cycle_pairs, out_csv):
    """Evaluate GAN, cycle-consistency and full-objective terms.

    The full objective is printed when four --gan terms and four --cycle
    directions are given; directions pair up as (1, 2) and (3, 4).
    """
    if not gan_pairs and not cycle_pairs:
        raise click.UsageError("give at least one --gan or --cycle pair")
    rows = []
    try:
        gans = []
        for i, (real, fake) in enumerate(gan_pairs, 1):
            val = gan_loss(read_probabilities(real), read_probabilities(fake))
            gans.append(val)
            rows.append([f"gan_{i}", fmt(val)])
        cycles = []
        for i, (orig_dir, rec_dir) in enumerate(cycle_pairs, 1):
            orig, rec = read_raster_batch(orig_dir), read_raster_batch(rec_dir)
            if sorted(orig) != sorted(rec):
                raise ValueError(f"{orig_dir} and {rec_dir} hold different image names")
            keys = sorted(orig)
            val = cycle_loss([orig[k] for k in keys], [rec[k] for k in keys])
            cycles.append(val)
            rows.append([f"cycle_dir_{i}", fmt(val)])
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        sys.exit(1)
    if len(gans) == 4 and len(cycles) == 4:
        terms = gans + [cycles[0] + cycles[1], cycles[2] + cycles[3]]
        rows.append(["full_objective", fmt(full_objective(terms))])
    for name, val in rows:
        click.echo(f"{name} {val}")
    if out_csv is not None:
        _write_csv(out_csv, ["term", "value"], rows)


if __name__ == "__main__":
    main()
