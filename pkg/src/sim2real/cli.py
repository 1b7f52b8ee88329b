""" Command-line entry point: every stage of the alignment workflow as a
    batch command reading and writing JSON files.

        $ sim2real fit-homography pairs.json --family projective
        $ sim2real build-twin --contours contours.json --camera camera.json \\
              --plane table.json --heights heights.json
        $ sim2real synth-eval config.json --seed 7

    Exit status is 0 on success, 2 for input or precondition errors and 1
    for internal faults. Errors are written to standard error as JSON
    (`{"error": code, "detail": ...}`).
"""

from __future__ import annotations

import dataclasses
import functools
import json
import logging
import os
import sys
from dataclasses import dataclass, field

import click

from . import files, qa
from .exceptions import InvalidInput, Sim2RealException
from .fluents import (DEFAULT_QUESTIONNAIRE, Domain, FluentVector,
                      Questionnaire, agreement_metrics, answer_checkpoints,
                      consistency_score)
from .geometry import (CameraModel, Extrinsics, Family, Plane, Point3,
                       TwoDofVariant)
from .planner import AogNode, WorldState, plan, simulate_effects
from .regression import (Correspondence2D2D, Correspondence2D3D,
                         Correspondence3D3D, apply_correction,
                         evaluate_alignment, fit_correction, fit_homography,
                         fit_intrinsics, model_from_dict)
from .settings import Settings
from .synth import SynthConfig, run_ablation, run_sensitivity
from .twin import TwinScene, build_twin, parse_contours
from .utils import is_dict

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig(object):
    """ What a command works with: its input files, where outputs go and
        the tolerance overrides. Seeds belong to the synth-eval config.
    """

    output_dir: str = "."
    tolerances: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)

    @property
    def settings(self):
        return Settings(**self.tolerances)

    def with_inputs(self, **paths):
        """ Copy with the given input paths, checked to exist (`None`
            values are dropped).
        """

        inputs = dict(self.inputs)
        inputs.update({name: path for name, path in paths.items()
                       if path is not None})
        result = dataclasses.replace(self, inputs=inputs)
        result.check()
        return result

    def check(self):
        for name, path in sorted(self.inputs.items()):
            if not os.path.isfile(path):
                raise InvalidInput("Input file for {} not found: '{}'".
                                   format(name, path), str(path))
        try:
            os.makedirs(self.output_dir, exist_ok=True)
        except OSError as e:
            raise InvalidInput("Cannot create output directory '{}': {}".
                               format(self.output_dir, e.strerror),
                               str(self.output_dir))
        if not os.access(self.output_dir, os.W_OK):
            raise InvalidInput("Output directory '{}' is not writable".
                               format(self.output_dir), str(self.output_dir))

    def output_path(self, default_name, explicit=None):
        if explicit is not None:
            return explicit
        return os.path.join(self.output_dir, default_name)


@dataclass(frozen=True)
class AlignmentBundle(object):
    """ Reports of the regressions that ran; absent stages are `None`. """

    homography: object = None
    holdout: object = None
    intrinsics: object = None
    correction: object = None

    @property
    def stages(self):
        return [name for name in ('homography', 'intrinsics', 'correction')
                if getattr(self, name) is not None]

    def summary(self):
        result = {}
        for name in self.stages:
            report = getattr(self, name)
            result[name] = {'mean': report.residual_mean,
                            'std': report.residual_std,
                            'mse': report.mse,
                            'n_points': report.n_points}
        if self.holdout is not None:
            result['holdout'] = {'mean': self.holdout.mean,
                                 'std': self.holdout.std,
                                 'mse': self.holdout.mse,
                                 'n_points': self.holdout.n_points}
        return result

    def to_dict(self):
        result = {'stages': self.stages, 'summary': self.summary()}
        for name in self.stages:
            result[name] = getattr(self, name).to_dict()
        if self.holdout is not None:
            result['holdout'] = self.holdout.to_dict()
        return result


# Plumbing
def _fail(error, code):
    click.echo(json.dumps(error, sort_keys=True), err=True)
    sys.exit(code)


def handle_errors(function):
    """ Map toolkit errors to exit status 2 and anything unexpected to 1. """

    @functools.wraps(function)
    def wrapper(*args, **kwargs):
        try:
            return function(*args, **kwargs)
        except Sim2RealException as e:
            logger.debug("Command failed", exc_info=True)
            _fail(e.to_dict(), 2)
        except (click.exceptions.Exit, click.ClickException):
            raise
        except Exception as e:
            logger.exception("Internal fault")
            _fail({'error': "internal_error",
                   'detail': "{}: {}".format(type(e).__name__, e)}, 1)
    return wrapper


def _parse_tolerances(ctx, param, values):
    result = {}
    for value in values:
        name, sep, number = value.partition('=')
        if not sep:
            raise click.BadParameter("expected NAME=VALUE, got '{}'".
                                     format(value))
        result[name.strip()] = number.strip()
    try:
        Settings(**result)
    except ValueError as e:
        raise click.BadParameter(str(e))
    return result


def _items(data, key):
    if is_dict(data):
        return data[key]
    return data


def _load_pairs(path, klass):
    return files.load(path, lambda data: [klass.from_dict(item)
                                          for item in _items(data, 'pairs')])


def _load_vectors(path):
    return files.load(path, lambda data: [FluentVector.from_dict(item)
                                          for item in _items(data, 'vectors')])


def _load_questionnaire(path):
    if path is None:
        return DEFAULT_QUESTIONNAIRE
    return files.load(path, Questionnaire.from_dict)


def _write(value, path):
    files.dump(value, path)
    click.echo(path)


def _config(ctx, **paths):
    return ctx.obj.with_inputs(**paths)


def _plan_waypoints(data):
    """ Waypoint records of a plan file (or of an earlier waypoint file). """

    if 'waypoints' in data:
        return [dict(item) for item in data['waypoints']]
    return [{'step': step['index'], 'action': step['action'],
             'label': label, 'position': position}
            for step in data['steps']
            for label, position in sorted(step['waypoints'].items())]


# Commands
@click.group()
@click.option('-v', '--verbose', is_flag=True, help="Log debug messages.")
@click.option('--tolerance', 'tolerances', multiple=True,
              callback=_parse_tolerances, metavar='NAME=VALUE',
              help="Override a numeric tolerance (repeatable).")
@click.option('--output-dir', envvar='SIM2REAL_OUTPUT_DIR', default=".",
              show_default=True, type=click.Path(file_okay=False),
              help="Where outputs go unless -o is given.")
@click.pass_context
def main(ctx, verbose, tolerances, output_dir):
    """Align a simulated scene with reality: camera, scene and control."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s | %(name)s | %(message)s",
    )
    ctx.obj = PipelineConfig(output_dir=output_dir, tolerances=tolerances)


@main.command('fit-homography')
@click.argument('pairs', type=click.Path(dir_okay=False))
@click.option('--family', type=click.Choice([f.value for f in Family]),
              default=Family.PROJECTIVE.value, show_default=True)
@click.option('--variant',
              type=click.Choice([v.value for v in TwoDofVariant]),
              default=TwoDofVariant.SCALING.value, show_default=True,
              help="Reading of the two-DOF model.")
@click.option('--refine', is_flag=True,
              help="Polish the projective fit on reprojection error.")
@click.option('--holdout', type=click.Path(dir_okay=False),
              help="Pairs to evaluate the fitted map on.")
@click.option('-o', '--output', type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def fit_homography_command(ctx, pairs, family, variant, refine, holdout,
                           output):
    """Fit the sim-to-real image homography."""
    config = _config(ctx, pairs=pairs, holdout=holdout)
    report = fit_homography(_load_pairs(pairs, Correspondence2D2D), family,
                            variant, refine, config.settings)
    result = report.to_dict()
    if holdout is not None:
        result['holdout'] = evaluate_alignment(
            report.model, _load_pairs(holdout, Correspondence2D2D),
            config.settings).to_dict()
    _write(result, config.output_path("homography_report.json", output))


@main.command()
@click.argument('pairs', type=click.Path(dir_okay=False))
@click.option('--extrinsics', required=True, type=click.Path(dir_okay=False))
@click.option('--equal-focal', is_flag=True, help="Constrain fx = fy.")
@click.option('-o', '--output', type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def calibrate(ctx, pairs, extrinsics, equal_focal, output):
    """Fit the simulated camera's intrinsics."""
    config = _config(ctx, pairs=pairs, extrinsics=extrinsics)
    report = fit_intrinsics(_load_pairs(pairs, Correspondence2D3D),
                            files.load(extrinsics, Extrinsics.from_dict),
                            equal_focal, config.settings)
    _write(report, config.output_path("intrinsics_report.json", output))


@main.command('build-twin')
@click.option('--contours', required=True, type=click.Path(dir_okay=False))
@click.option('--camera', required=True, type=click.Path(dir_okay=False))
@click.option('--plane', required=True, type=click.Path(dir_okay=False))
@click.option('--heights', required=True, type=click.Path(dir_okay=False))
@click.option('--workers', type=int, help="Place objects concurrently.")
@click.option('-o', '--output', type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def build_twin_command(ctx, contours, camera, plane, heights, workers,
                       output):
    """Place contoured objects on the support plane."""
    config = _config(ctx, contours=contours, camera=camera, plane=plane,
                     heights=heights)
    scene = build_twin(files.load(contours, parse_contours),
                       files.load(camera, CameraModel.from_dict),
                       files.load(plane, Plane.from_dict),
                       files.load(heights, lambda data: {
                           str(k): float(v) for k, v in data.items()}),
                       workers, config.settings)
    _write(scene, config.output_path("twin_scene.json", output))


@main.command('plan')
@click.argument('aog', type=click.Path(dir_okay=False))
@click.option('--state', required=True, type=click.Path(dir_okay=False),
              help="Initial fluent values.")
@click.option('--scene', type=click.Path(dir_okay=False),
              help="Twin scene resolving the actions' object references.")
@click.option('-o', '--output', type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def plan_command(ctx, aog, state, scene, output):
    """Decompose a task graph into atomic actions with a fluent trace."""
    config = _config(ctx, aog=aog, state=state, scene=scene)
    twin = files.load(scene, TwinScene.from_dict) if scene else None
    initial = files.load(state, lambda data: WorldState.from_dict(data, twin))
    actions = plan(files.load(aog, AogNode.from_dict), initial)
    final, trace = simulate_effects(actions, initial)
    _write({'actions': [action.id for action in actions],
            'steps': [step.to_dict() for step in trace],
            'final_state': final.to_dict()},
           config.output_path("plan.json", output))


@main.command('score-fluents')
@click.argument('real', type=click.Path(dir_okay=False))
@click.argument('sim', type=click.Path(dir_okay=False))
@click.option('--questionnaire', type=click.Path(dir_okay=False))
@click.option('-o', '--output', type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def score_fluents(ctx, real, sim, questionnaire, output):
    """Consistency score of real and simulated checkpoint answers."""
    config = _config(ctx, real=real, sim=sim, questionnaire=questionnaire)
    q = _load_questionnaire(questionnaire)
    real_vectors = [v.check(q) for v in _load_vectors(real)]
    sim_vectors = [v.check(q) for v in _load_vectors(sim)]
    report = consistency_score(real_vectors, sim_vectors, q.ids)
    _write(report, config.output_path("consistency.json", output))


@main.command()
@click.argument('plan_file', metavar='PLAN', type=click.Path(dir_okay=False))
@click.option('--correction', required=True, type=click.Path(dir_okay=False),
              help="Correction model or correction fit report.")
@click.option('-o', '--output', type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def correct(ctx, plan_file, correction, output):
    """Apply the control correction to a plan's waypoints."""
    config = _config(ctx, plan=plan_file, correction=correction)
    model = files.load(correction, lambda data: model_from_dict(
        data, None if 'kind' in data else 'correction'))
    waypoints = files.load(plan_file, _plan_waypoints)
    for item in waypoints:
        item['position'] = apply_correction(
            model, Point3.from_list(item['position'])).to_list()
    _write({'waypoints': waypoints},
           config.output_path("corrected_waypoints.json", output))


@main.command('fit-correction')
@click.argument('pairs', type=click.Path(dir_okay=False))
@click.option('-o', '--output', type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def fit_correction_command(ctx, pairs, output):
    """Fit the 3D affine control correction from planned/actual positions."""
    config = _config(ctx, pairs=pairs)
    report = fit_correction(_load_pairs(pairs, Correspondence3D3D),
                            config.settings)
    _write(report, config.output_path("correction_report.json", output))


@main.command()
@click.option('--image-pairs', type=click.Path(dir_okay=False),
              help="Sim/real pixel pairs (camera alignment).")
@click.option('--holdout', type=click.Path(dir_okay=False))
@click.option('--family', type=click.Choice([f.value for f in Family]),
              default=Family.PROJECTIVE.value, show_default=True)
@click.option('--world-pairs', type=click.Path(dir_okay=False),
              help="Pixel/world pairs (intrinsics).")
@click.option('--extrinsics', type=click.Path(dir_okay=False))
@click.option('--motion-pairs', type=click.Path(dir_okay=False),
              help="Planned/actual positions (control correction).")
@click.option('-o', '--output', type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def align(ctx, image_pairs, holdout, family, world_pairs, extrinsics,
          motion_pairs, output):
    """Run every regression that has inputs and bundle the reports."""
    config = _config(ctx, image_pairs=image_pairs, holdout=holdout,
                     world_pairs=world_pairs, extrinsics=extrinsics,
                     motion_pairs=motion_pairs)
    settings = config.settings
    if not (image_pairs or world_pairs or motion_pairs):
        raise InvalidInput("Nothing to align: give --image-pairs, "
                           "--world-pairs or --motion-pairs")
    if world_pairs and not extrinsics:
        raise InvalidInput("--world-pairs needs --extrinsics", world_pairs)

    bundle = {}
    if image_pairs:
        report = fit_homography(_load_pairs(image_pairs, Correspondence2D2D),
                                family, settings=settings)
        bundle['homography'] = report
        if holdout:
            bundle['holdout'] = evaluate_alignment(
                report.model, _load_pairs(holdout, Correspondence2D2D),
                settings)
    if world_pairs:
        bundle['intrinsics'] = fit_intrinsics(
            _load_pairs(world_pairs, Correspondence2D3D),
            files.load(extrinsics, Extrinsics.from_dict), settings=settings)
    if motion_pairs:
        bundle['correction'] = fit_correction(
            _load_pairs(motion_pairs, Correspondence3D3D), settings)
    _write(AlignmentBundle(**bundle),
           config.output_path("alignment.json", output))


@main.command('synth-eval')
@click.argument('config_file', metavar='CONFIG',
                type=click.Path(dir_okay=False))
@click.option('--seed', type=int, help="Overrides the config's seed.")
@click.option('--trials', type=int, help="Overrides the config's n_trials.")
@click.option('--workers', type=int, help="Run trials concurrently.")
@click.option('--sensitivity', is_flag=True,
              help="Also run the placement-noise sweep.")
@click.pass_context
@handle_errors
def synth_eval(ctx, config_file, seed, trials, workers, sensitivity):
    """Compare the homography families on synthetic trials."""
    config = _config(ctx, config=config_file)
    cfg = files.load(config_file, SynthConfig.from_dict)
    changes = {name: value for name, value in (('seed', seed),
                                               ('n_trials', trials),
                                               ('workers', workers))
               if value is not None}
    cfg = cfg.replace(**changes)

    table = run_ablation(cfg, config.settings)
    files.dump(table, config.output_path("ablation.json"))
    with open(config.output_path("ablation.txt"), 'w') as f:
        f.write(table.format_table())
    click.echo(table.format_table(), nl=False)

    if sensitivity:
        report = run_sensitivity(cfg, config.settings)
        files.dump(report, config.output_path("sensitivity.json"))
        with open(config.output_path("sensitivity.txt"), 'w') as f:
            f.write(report.format_table())


@main.command('answer-fluents')
@click.argument('image_refs', nargs=-1, required=True)
@click.option('--adapter', type=click.Choice(sorted(qa.registry)),
              default=qa.FixtureAdapter.NAME, show_default=True)
@click.option('--fixtures', type=click.Path(dir_okay=False),
              help="Recorded answers (fixture adapter).")
@click.option('--url', help="Endpoint (http adapter).")
@click.option('--api-key', envvar='SIM2REAL_QA_API_KEY',
              help="Bearer token (http adapter).")
@click.option('--domain', type=click.Choice([d.value for d in Domain]),
              default=Domain.REAL.value, show_default=True)
@click.option('--questionnaire', type=click.Path(dir_okay=False))
@click.option('--workers', type=int)
@click.option('-o', '--output', type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def answer_fluents(ctx, image_refs, adapter, fixtures, url, api_key, domain,
                   questionnaire, workers, output):
    """Answer the checkpoint questionnaire for each image, in order."""
    config = _config(ctx, fixtures=fixtures, questionnaire=questionnaire)
    if adapter == qa.FixtureAdapter.NAME:
        if fixtures is None:
            raise InvalidInput("The fixture adapter needs --fixtures")
        backend = qa.new(adapter, path=fixtures)
    else:
        backend = qa.new(adapter, url=url, auth=api_key)
    vectors = answer_checkpoints(backend, image_refs,
                                 _load_questionnaire(questionnaire),
                                 Domain(domain), workers)
    _write(vectors, config.output_path("fluents.json", output))


@main.command('fluent-metrics')
@click.argument('predictions', type=click.Path(dir_okay=False))
@click.argument('truths', type=click.Path(dir_okay=False))
@click.option('-o', '--output', type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def fluent_metrics(ctx, predictions, truths, output):
    """Precision, recall and F1 of predicted answers against ground truth."""
    config = _config(ctx, predictions=predictions, truths=truths)
    report = agreement_metrics(_load_vectors(predictions),
                               _load_vectors(truths))
    files.dump(report, config.output_path("fluent_metrics.json", output))
    click.echo(report.format_table(), nl=False)


if __name__ == "__main__":
    main()
