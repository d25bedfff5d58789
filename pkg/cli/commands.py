import os
import csv
import sys
import logging

import click

from cli.run_config import RunConfig
from core.errors import EXIT_USAGE, CueBallError, IndexOutOfRange, IoFailure, SizeMismatch
from core.memory_core import (
    Hyperparams, configure_workers, learn_range, new_store, recall, respond, sweep
)
from core.metrics import (
    REFERENCE_SHADING_MEAN, REFERENCE_TOTAL_INTENSITY, ShadingNorm, evaluate, spectrum_summary
)
from db.store import append_learned, load, read_header, save
from utils.idx_ingest import Region, load_idx, partial_probe, pattern_at, patterns
from utils.image_utils import to_pixels, write_montage, write_pgm
from utils.settings import Settings

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
DEFAULT_SWEEP = tuple(float(h) for h in range(100, 45, -5))


class CueBallGroup(click.Group):
    """Maps failures onto exit codes: 1 usage, 2 data, 3 store"""

    def make_context(self, info_name, args, parent=None, **extra):
        try:
            return super().make_context(info_name, args, parent=parent, **extra)
        except click.UsageError as e:
            e.exit_code = EXIT_USAGE
            raise

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            e.exit_code = EXIT_USAGE
            raise
        except CueBallError as e:
            logger.error("%s", e)
            click.echo(f"error: {e}", err=True)
            ctx.exit(e.exit_code)


images_option = click.option("--images", type=click.Path(dir_okay=False), default=None,
                             help="IDX image file (train-images-idx3-ubyte, optionally .gz).")
store_option = click.option("--store", type=click.Path(dir_okay=False), default=None,
                            help="Store file to read or extend.")
threshold_option = click.option("--threshold", type=float, default=None, help="Firing threshold H.")
half_option = click.option("--half", is_flag=True, help="Present only the upper half of the probe image.")
probe_argument = click.argument("probe", type=int)


@click.group(cls=CueBallGroup)
@click.option("-v", "--verbose", is_flag=True, help="Log debug output.")
@click.option("-q", "--quiet", is_flag=True, help="Log warnings and errors only.")
@click.pass_context
def cli(ctx, verbose, quiet):
    """Cue ball associative memory: learn image patterns, recall them and similar ones."""
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)

    settings = Settings()
    configure_workers(int(settings.get("workers", 4)))
    ctx.obj = settings


def _load_dataset(config):
    if not config.images_path:
        raise click.UsageError("no image file given: pass --images or set images_path in the settings file")
    return load_idx(config.images_path)


def _probe(raw, index, memory, half):
    pattern = pattern_at(raw, index, memory.precision)
    if pattern.values.size != memory.recall_size:
        raise SizeMismatch(memory.recall_size, pattern.values.size)
    if half:
        pattern = partial_probe(pattern, Region.UPPER)
    return pattern


def _source_scale(raw, pattern_id):
    if pattern_id is None or not 0 <= pattern_id < raw.count or not raw.image(pattern_id).any():
        return None
    return pattern_at(raw, pattern_id).raw_norm


def _dump_candidates(directory, raw, pattern, result, montage):
    probe_pixels = to_pixels(pattern)
    write_pgm(os.path.join(directory, "probe.pgm"), probe_pixels)

    tiles = [probe_pixels]
    for candidate in result.fired:
        pixels = to_pixels(candidate.pattern, _source_scale(raw, candidate.pattern.pattern_id))
        write_pgm(os.path.join(directory, f"cue_{candidate.cue_id:05d}.pgm"), pixels)
        tiles.append(pixels)

    if montage:
        write_montage(os.path.join(directory, "montage.pgm"), tiles)
    logger.info("Wrote %d images to %s", len(tiles), directory)


def _open_output(out):
    if out is None:
        return click.get_text_stream("stdout")
    try:
        os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
        return open(out, "w", newline="")
    except OSError as e:
        raise IoFailure(f"cannot write {out}: {e}") from e


@cli.command("train")
@images_option
@store_option
@click.option("--start", type=int, default=None, help="First pattern index.")
@click.option("--count", type=int, default=None, help="Number of patterns (default: to the end of the file).")
@click.option("--chunk-size", type=int, default=None, help="Patterns per chunk m (progress and checkpoint).")
@click.option("--theta", type=float, default=None, help="Target response theta of a learned cue.")
@threshold_option
@click.option("--precision", type=click.Choice(["f32", "f64"]), default=None, help="Real arithmetic width.")
@click.pass_obj
def cmd_train(settings, images, store, start, count, chunk_size, theta, threshold, precision):
    """Learn patterns [start, start+count) onto the cues of the same indices."""
    config = RunConfig.resolve(settings, images=images, store=store, start=start, count=count,
                               chunk_size=chunk_size, theta=theta, threshold=threshold, precision=precision)
    raw = _load_dataset(config)

    count = raw.count - config.start if config.count is None else config.count
    stop = config.start + count
    if count < 1 or stop > raw.count:
        raise IndexOutOfRange(stop - 1, raw.count, what="image")

    exists = os.path.exists(config.store_path)
    if exists:
        memory = load(config.store_path)
        if memory.recall_size != raw.image_size:
            raise SizeMismatch(memory.recall_size, raw.image_size)
        if memory.precision is not config.precision or memory.params.theta != config.theta:
            logger.warning("%s keeps its own settings (%s, theta=%g)",
                           config.store_path, memory.precision.value, memory.params.theta)
    else:
        params = Hyperparams(theta=config.theta, threshold_h=config.threshold_h)
        memory = new_store(raw.image_size, stop, params, config.precision)

    if memory.capacity < stop:
        memory.add_cues(stop - memory.capacity)

    written = exists

    def checkpoint(chunk):
        nonlocal written
        if written:
            append_learned(config.store_path, [memory.cue(report.cue_id) for report in chunk])
        else:
            save(memory, config.store_path)
            written = True

    reports = learn_range(memory, patterns(raw, config.start, count, memory.precision),
                          config.chunk_size, on_chunk=checkpoint)
    settings.add_recent_store(config.store_path)

    worst = max(max(report.recall_error, report.cue_error) for report in reports)
    click.echo(f"learned patterns {config.start}..{stop - 1} ({len(reports)}); "
               f"store holds {memory.learned_count} of {memory.capacity} cues")
    click.echo(f"largest residual error: {worst:.3g}")


@cli.command("recall")
@probe_argument
@images_option
@store_option
@threshold_option
@half_option
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Directory for P5 image dumps.")
@click.option("--montage", is_flag=True, help="Also write all candidates as one montage image.")
@click.pass_obj
def cmd_recall(settings, probe, images, store, threshold, half, out, montage):
    """Present pattern PROBE and list the cues that fire, strongest first."""
    config = RunConfig.resolve(settings, images=images, store=store, out=out, threshold=threshold)
    memory = load(config.store_path)
    raw = _load_dataset(config)

    # without --threshold, H is the one the store was trained with
    h = memory.params.threshold_h if threshold is None else config.threshold_h
    pattern = _probe(raw, probe, memory, half)
    result = recall(memory, pattern, h)
    summary = spectrum_summary(result.spectrum, h)

    label = f"probe {probe}" + (" (upper half)" if half else "")
    if summary.peak_cue_id is None:
        click.echo(f"{label}: store has no learned cues")
    else:
        click.echo(f"{label}: peak cue {summary.peak_cue_id} q={summary.peak_q:.6f}")
    click.echo(f"{len(result)} candidates at H={h:g}")
    for candidate in result.fired:
        click.echo(f"{candidate.cue_id}\t{candidate.q:.6f}")

    if config.output_path:
        directory = os.path.join(config.output_path, f"probe_{probe:05d}" + ("_upper" if half else ""))
        _dump_candidates(directory, raw, pattern, result, montage)


@cli.command("spectrum")
@probe_argument
@images_option
@store_option
@half_option
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV file (default: stdout).")
@click.pass_obj
def cmd_spectrum(settings, probe, images, store, half, out):
    """Write the firing spectrum of every learned cue for pattern PROBE as CSV."""
    config = RunConfig.resolve(settings, images=images, store=store)
    memory = load(config.store_path)
    raw = _load_dataset(config)

    spectrum = respond(memory, _probe(raw, probe, memory, half))

    stream = _open_output(out)
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["cue_id", "q"])
        for cue_id, q in spectrum.entries():
            writer.writerow([cue_id, f"{q:.6f}"])
    finally:
        if out is not None:
            stream.close()


@cli.command("sweep")
@probe_argument
@images_option
@store_option
@half_option
@click.option("--threshold", "thresholds", type=float, multiple=True,
              help="Threshold to count candidates at (repeatable; default 100 down to 50 by 5).")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV file (default: stdout).")
@click.pass_obj
def cmd_sweep(settings, probe, images, store, half, thresholds, out):
    """Count recall candidates for pattern PROBE as the threshold is lowered."""
    config = RunConfig.resolve(settings, images=images, store=store)
    memory = load(config.store_path)
    raw = _load_dataset(config)

    spectrum = respond(memory, _probe(raw, probe, memory, half))

    stream = _open_output(out)
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["threshold", "candidates"])
        for h, candidates in sweep(spectrum, thresholds or DEFAULT_SWEEP):
            writer.writerow([f"{h:g}", candidates])
    finally:
        if out is not None:
            stream.close()


@cli.command("eval")
@images_option
@store_option
@click.option("--shading", type=click.Choice(["l1", "l2"]), default="l1", help="Shading distance norm.")
@click.pass_obj
def cmd_eval(settings, images, store, shading):
    """Compare every learned cue's recall with its source image."""
    config = RunConfig.resolve(settings, images=images, store=store)
    memory = load(config.store_path)
    raw = _load_dataset(config)

    report = evaluate(memory, raw, config.binarize_cutoff, ShadingNorm(shading))

    click.echo(f"patterns: {report.pattern_count}")
    click.echo(f"hamming_mean: {report.hamming_mean:.6f}")
    click.echo(f"hamming_max: {report.hamming_max}")
    click.echo(f"shading_mean: {report.shading_mean:.6f} "
               f"(reference {REFERENCE_SHADING_MEAN}, deviation {report.shading_deviation:+.6f})")
    click.echo(f"mean_total_intensity: {report.mean_total_intensity:.2f} (reference {REFERENCE_TOTAL_INTENSITY})")
    click.echo(f"memory_rate: {report.memory_rate:.6f}")


@cli.command("info")
@store_option
@click.pass_obj
def cmd_info(settings, store):
    """Show the header of a store file."""
    config = RunConfig.resolve(settings, store=store)
    info = read_header(config.store_path)

    click.echo(f"store: {info.path}")
    click.echo(f"format version: {info.version}")
    click.echo(f"precision: {info.precision.value}")
    click.echo(f"recall neurons: {info.recall_size}")
    click.echo(f"cue capacity: {info.capacity}")
    click.echo(f"learned cues: {info.learned_count}")
    click.echo(f"theta: {info.params.theta:g}  H: {info.params.threshold_h:g}  "
               f"eps_W: {info.params.epsilon_w:g}  eps_V: {info.params.epsilon_v:g}")
    click.echo(f"checksum: 0x{info.checksum:08x}")


def main():
    cli(prog_name="cueball")
