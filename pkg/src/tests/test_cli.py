import json
import math
import os

import numpy as np
from click.testing import CliRunner

import pour_water
from sim2real.cli import main
from sim2real.fluents import DEFAULT_QUESTIONNAIRE
from sim2real.geometry import Point3, project
from sim2real.regression import Correction3D
from sim2real.synth import SynthConfig
from sim2real.twin import PlacedObject, ShapeClass, TwinScene

from .constants import GRID, OBLIQUE, OVERHEAD, PROJECTIVE_M, TABLE
from .payloads import (image_pairs, motion_pairs, read_json, square_contour,
                       vectors, world_pairs, write_json)
from .test_fluents import FIXTURES, TRACE

CORNERS = [GRID[0], GRID[3], GRID[16], GRID[19]]
BOX = [(x, y, z) for x in (-0.1, 0.1) for y in (-0.08, 0.08)
       for z in (0.0, 0.06)]


def _run(*args, env=None):
    return CliRunner().invoke(main, [str(arg) for arg in args], env=env)


def _error(result):
    """ The JSON error record a failed command printed last. """

    return json.loads(result.stderr.strip().splitlines()[-1])


def _dump(tmp_path, name, records):
    return write_json(tmp_path, name, [record.to_dict()
                                       for record in records])


def _scene_file(tmp_path):
    objects = [PlacedObject("cup", ShapeClass.CYLINDER, Point3(0.1, 0.0, 0.0),
                            0.0, {'radius': 0.03, 'height': 0.1}, TABLE),
               PlacedObject("jar", ShapeClass.CYLINDER,
                            Point3(-0.1, 0.05, 0.0), 0.0,
                            {'radius': 0.04, 'height': 0.16}, TABLE)]
    return write_json(tmp_path, "scene.json",
                      TwinScene(TABLE, tuple(objects), OVERHEAD).to_dict())


def _plan_files(tmp_path, water_in_jar=True):
    aog = write_json(tmp_path, "aog.json", pour_water.make_graph().to_dict())
    state = write_json(tmp_path, "state.json", pour_water.initial_state(
        water_in_jar=water_in_jar).to_dict())
    return aog, state


# fit-homography
def test_fit_homography(tmp_path):
    pairs = _dump(tmp_path, "pairs.json", image_pairs(PROJECTIVE_M, CORNERS))
    result = _run("--output-dir", tmp_path, "fit-homography", pairs)

    assert result.exit_code == 0, result.output
    path = os.path.join(str(tmp_path), "homography_report.json")
    assert result.stdout.strip() == path
    report = read_json(path)
    assert report['kind'] == "homography"
    assert report['mse'] < 1e-18
    assert report['n_points'] == 4
    assert report['diagnostics']['n_params'] == 8
    m = np.reshape(report['model']['m'], (3, 3))
    assert np.allclose(m, PROJECTIVE_M, atol=1e-8)


def test_fit_homography_with_holdout(tmp_path):
    pairs = _dump(tmp_path, "pairs.json", image_pairs(PROJECTIVE_M, GRID[:12]))
    holdout = _dump(tmp_path, "holdout.json",
                    image_pairs(PROJECTIVE_M, GRID[12:]))
    output = os.path.join(str(tmp_path), "out", "report.json")

    result = _run("fit-homography", pairs, "--family", "affine",
                  "--holdout", holdout, "-o", output)

    assert result.exit_code == 0, result.output
    report = read_json(output)
    assert report['diagnostics']['n_params'] == 6
    assert report['holdout']['n_points'] == 8
    assert report['holdout']['mean'] > 0


def test_fit_homography_insufficient_points(tmp_path):
    pairs = _dump(tmp_path, "pairs.json",
                  image_pairs(PROJECTIVE_M, CORNERS[:3]))
    result = _run("--output-dir", tmp_path, "fit-homography", pairs)

    assert result.exit_code == 2
    error = _error(result)
    assert error['error'] == "insufficient_points"
    assert (error['needed'], error['got']) == (4, 3)
    assert not os.path.exists(os.path.join(str(tmp_path),
                                           "homography_report.json"))


def test_missing_input(tmp_path):
    missing = os.path.join(str(tmp_path), "nowhere.json")
    result = _run("--output-dir", tmp_path, "fit-homography", missing)

    assert result.exit_code == 2
    error = _error(result)
    assert error['error'] == "invalid_input"
    assert error['path'] == missing


def test_malformed_input(tmp_path):
    pairs = write_json(tmp_path, "pairs.json", {'pairs': [{'sim': [1, 2]}]})
    result = _run("--output-dir", tmp_path, "fit-homography", pairs)

    assert result.exit_code == 2
    assert _error(result)['path'] == pairs
    assert "real" in _error(result)['detail']

    broken = os.path.join(str(tmp_path), "broken.json")
    with open(broken, 'w') as f:
        f.write("{not json")
    result = _run("--output-dir", tmp_path, "fit-homography", broken)
    assert result.exit_code == 2
    assert _error(result)['error'] == "invalid_input"


# calibrate
def test_calibrate(tmp_path):
    pairs = _dump(tmp_path, "pairs.json", world_pairs(OBLIQUE, BOX))
    extrinsics = write_json(tmp_path, "extrinsics.json",
                            OBLIQUE.extrinsics.to_dict())
    result = _run("--output-dir", tmp_path, "calibrate", pairs,
                  "--extrinsics", extrinsics)

    assert result.exit_code == 0, result.output
    report = read_json(os.path.join(str(tmp_path), "intrinsics_report.json"))
    assert report['kind'] == "intrinsics"
    expected = OBLIQUE.intrinsics.to_dict()
    for name, value in report['model'].items():
        assert abs(value - expected[name]) < 1e-6 * expected[name]

    result = _run("--output-dir", tmp_path, "calibrate", pairs,
                  "--extrinsics", extrinsics, "--equal-focal")
    report = read_json(os.path.join(str(tmp_path), "intrinsics_report.json"))
    assert report['model']['fx'] == report['model']['fy']
    assert report['diagnostics']['n_params'] == 3


def test_calibrate_needs_extrinsics(tmp_path):
    pairs = _dump(tmp_path, "pairs.json", world_pairs(OBLIQUE, BOX))
    result = _run("--output-dir", tmp_path, "calibrate", pairs)
    assert result.exit_code == 2


# build-twin
def test_build_twin(tmp_path):
    cup = PlacedObject("cup", ShapeClass.CYLINDER, Point3(0.1, 0.05, 0.0), 0.0,
                       {'radius': 0.04, 'height': 0.10}, TABLE)
    rim = [project(OBLIQUE, p).to_list() for p in cup.rim_points(96)]
    jar = PlacedObject("jar", ShapeClass.CUBOID, Point3(-0.08, 0.02, 0.0), 0.2,
                       {'width': 0.08, 'depth': 0.065, 'height': 0.16},
                       TABLE)
    corners = [project(OBLIQUE, p).to_list() for p in jar.base_corners()]
    contours = write_json(tmp_path, "contours.json", [
        {'label': "cup", 'shape': "cylinder", 'points': rim},
        {'label': "wedge", 'shape': "cuboid",
         'points': [(0, 0), (100, 0), (50, 80)]},
        {'label': "jar", 'shape': "cuboid",
         'points': square_contour(corners, 16).to_dict()['points']},
    ])
    camera = write_json(tmp_path, "camera.json", OBLIQUE.to_dict())
    plane = write_json(tmp_path, "plane.json", TABLE.to_dict())
    heights = write_json(tmp_path, "heights.json",
                         dict(pour_water.DEFAULT_HEIGHTS, wedge=0.05))

    result = _run("--output-dir", tmp_path, "build-twin",
                  "--contours", contours, "--camera", camera,
                  "--plane", plane, "--heights", heights, "--workers", 2)

    assert result.exit_code == 0, result.output
    data = read_json(os.path.join(str(tmp_path), "twin_scene.json"))
    scene = TwinScene.from_dict(data)
    assert scene.labels == ['cup', 'jar']
    assert list(data['failures']) == ['wedge']
    assert np.linalg.norm(scene.get('cup').position.as_array() -
                          cup.position.as_array()) < 1e-6
    assert scene.get('jar').dimensions['height'] == 0.16
    assert abs(scene.get('jar').yaw - 0.2) < 1e-6


# plan
def test_plan(tmp_path):
    aog, state = _plan_files(tmp_path)
    result = _run("--output-dir", tmp_path, "plan", aog, "--state", state)

    assert result.exit_code == 0, result.output
    data = read_json(os.path.join(str(tmp_path), "plan.json"))
    assert data['actions'] == [pour_water.APPROACH, pour_water.PICK,
                               pour_water.MOVE, pour_water.POUR]
    assert [step['index'] for step in data['steps']] == [0, 1, 2, 3]
    assert data['final_state']['fluents']['water_in_cup'] is True


def test_plan_without_water(tmp_path):
    aog, state = _plan_files(tmp_path, water_in_jar=False)
    result = _run("--output-dir", tmp_path, "plan", aog, "--state", state)

    assert result.exit_code == 2
    error = _error(result)
    assert error['error'] == "precondition_unsatisfiable"
    assert error['action'] == pour_water.POUR
    assert error['missing'] == ['water_in_jar']
    assert error['step'] == 3


def test_plan_invalid_graph(tmp_path):
    aog = write_json(tmp_path, "aog.json", {
        'kind': "or", 'name': "root",
        'children': [{'kind': "terminal", 'action': {'id': "a"}},
                     {'kind': "terminal", 'action': {'id': "b"}}],
    })
    state = write_json(tmp_path, "state.json", {'fluents': {}})
    result = _run("--output-dir", tmp_path, "plan", aog, "--state", state)

    assert result.exit_code == 2
    error = _error(result)
    assert error['error'] == "invalid_graph"
    assert error['violations'][0]['rule'] == "root_kind"


# correct
def test_correct(tmp_path):
    aog, state = _plan_files(tmp_path)
    scene = _scene_file(tmp_path)
    result = _run("--output-dir", tmp_path, "plan", aog, "--state", state,
                  "--scene", scene)
    assert result.exit_code == 0, result.output
    plan_file = os.path.join(str(tmp_path), "plan.json")

    identity = write_json(tmp_path, "identity.json",
                          Correction3D.identity().to_dict())
    result = _run("--output-dir", tmp_path, "correct", plan_file,
                  "--correction", identity, "-o",
                  os.path.join(str(tmp_path), "same.json"))
    assert result.exit_code == 0, result.output
    same = read_json(os.path.join(str(tmp_path), "same.json"))['waypoints']
    assert [w['label'] for w in same] == ['jar', 'jar', 'cup', 'cup']
    assert [w['step'] for w in same] == [0, 1, 2, 3]
    assert same[0]['position'] == [-0.1, 0.05, 0.0]
    assert same[2]['position'] == [0.1, 0.0, 0.0]

    shift = write_json(tmp_path, "shift.json",
                       Correction3D.translation([0.01, 0.0, -0.02]).to_dict())
    result = _run("--output-dir", tmp_path, "correct", plan_file,
                  "--correction", shift)
    assert result.exit_code == 0, result.output
    moved = read_json(os.path.join(str(tmp_path),
                                   "corrected_waypoints.json"))['waypoints']
    for before, after in zip(same, moved):
        assert np.allclose(np.subtract(after['position'], before['position']),
                           [0.01, 0.0, -0.02], atol=1e-12)

    # A corrected waypoint file can be corrected again
    again = os.path.join(str(tmp_path), "again.json")
    result = _run("correct", os.path.join(str(tmp_path),
                                          "corrected_waypoints.json"),
                  "--correction", identity, "-o", again)
    assert result.exit_code == 0, result.output
    assert read_json(again)['waypoints'] == moved


def test_correct_missing_correction(tmp_path):
    aog, state = _plan_files(tmp_path)
    _run("--output-dir", tmp_path, "plan", aog, "--state", state)
    result = _run("--output-dir", tmp_path, "correct",
                  os.path.join(str(tmp_path), "plan.json"),
                  "--correction", os.path.join(str(tmp_path), "none.json"))

    assert result.exit_code == 2
    assert _error(result)['error'] == "invalid_input"


# fit-correction
def test_fit_correction(tmp_path):
    d = np.eye(4)
    d[:3, :3] = [[1.01, 0.0, 0.002], [0.0, 0.99, 0.0], [0.001, 0.0, 1.0]]
    d[:3, 3] = [0.005, -0.003, 0.01]
    pairs = _dump(tmp_path, "motion.json", motion_pairs(d, BOX))

    result = _run("--output-dir", tmp_path, "fit-correction", pairs)
    assert result.exit_code == 0, result.output
    path = os.path.join(str(tmp_path), "correction_report.json")
    report = read_json(path)
    assert report['kind'] == "correction"
    assert np.allclose(np.reshape(report['model']['d'], (4, 4)), d,
                       atol=1e-9)

    # The report itself is accepted by `correct`
    waypoints = write_json(tmp_path, "waypoints.json", {'waypoints': [
        {'step': 0, 'action': "a", 'label': "cup", 'position': [0, 0, 0]}]})
    result = _run("--output-dir", tmp_path, "correct", waypoints,
                  "--correction", path)
    assert result.exit_code == 0, result.output
    corrected = read_json(os.path.join(str(tmp_path),
                                       "corrected_waypoints.json"))
    assert np.allclose(corrected['waypoints'][0]['position'], d[:3, 3])


def test_fit_correction_coplanar(tmp_path):
    flat = [p for p in BOX if p[2] == 0.0] + [(0.0, 0.0, 0.0)]
    pairs = _dump(tmp_path, "motion.json", motion_pairs(np.eye(4), flat))
    result = _run("--output-dir", tmp_path, "fit-correction", pairs)

    assert result.exit_code == 2
    assert _error(result)['error'] == "degenerate_configuration"


# score-fluents
def test_score_fluents(tmp_path):
    real = _dump(tmp_path, "real.json", vectors(TRACE, "real"))
    sim = _dump(tmp_path, "sim.json", vectors(TRACE, "simulation"))

    result = _run("--output-dir", tmp_path, "score-fluents", real, sim)
    assert result.exit_code == 0, result.output
    report = read_json(os.path.join(str(tmp_path), "consistency.json"))
    assert report['score'] == 1.0

    flipped = [list(row) for row in TRACE]
    flipped[2][1] = not flipped[2][1]
    sim = _dump(tmp_path, "sim.json", vectors(flipped, "simulation"))
    result = _run("--output-dir", tmp_path, "score-fluents", real, sim)
    assert result.exit_code == 0, result.output
    report = read_json(os.path.join(str(tmp_path), "consistency.json"))
    assert abs(report['score'] - 0.367879) < 1e-6
    assert report['score'] == math.exp(-1)


def test_score_fluents_mismatch(tmp_path):
    real = _dump(tmp_path, "real.json", vectors(TRACE, "real"))
    sim = write_json(tmp_path, "sim.json", {'vectors': [
        v.to_dict() for v in vectors(TRACE[:3], "simulation")]})

    result = _run("--output-dir", tmp_path, "score-fluents", real, sim)
    assert result.exit_code == 2
    assert _error(result)['error'] == "shape_mismatch"

    short = _dump(tmp_path, "short.json",
                  vectors([row[:3] for row in TRACE], "simulation"))
    result = _run("--output-dir", tmp_path, "score-fluents", real, short)
    assert result.exit_code == 2
    assert _error(result)['error'] == "shape_mismatch"


# answer-fluents / fluent-metrics
def test_answer_fluents(tmp_path):
    fixtures = write_json(tmp_path, "fixtures.json", FIXTURES)
    refs = ["real_{}.png".format(i) for i in (1, 2, 3, 4)]

    result = _run("--output-dir", tmp_path, "answer-fluents", *refs,
                  "--fixtures", fixtures, "--workers", 2)
    assert result.exit_code == 0, result.output
    data = read_json(os.path.join(str(tmp_path), "fluents.json"))
    assert [item['answers'] for item in data] == [list(row) for row in TRACE]
    assert [item['checkpoint'] for item in data] == [1, 2, 3, 4]
    assert {item['domain'] for item in data} == {"real"}

    result = _run("--output-dir", tmp_path, "answer-fluents", "real_9.png",
                  "--fixtures", fixtures)
    assert result.exit_code == 2
    assert _error(result)['image_ref'] == "real_9.png"

    result = _run("--output-dir", tmp_path, "answer-fluents", "real_1.png")
    assert result.exit_code == 2
    assert "--fixtures" in _error(result)['detail']


def test_fluent_metrics(tmp_path):
    predictions = _dump(tmp_path, "predictions.json",
                        vectors([(True, True, True, False, False)], "real"))
    truths = _dump(tmp_path, "truths.json",
                   vectors([(True, True, False, True, False)], "real"))

    result = _run("--output-dir", tmp_path, "fluent-metrics", predictions,
                  truths)
    assert result.exit_code == 0, result.output
    assert result.stdout.splitlines()[1].split() == ["Real", "66.7%",
                                                     "66.7%", "66.7%"]
    report = read_json(os.path.join(str(tmp_path), "fluent_metrics.json"))
    assert report['real']['precision'] == 2 / 3
    assert report['simulation']['precision'] is None


def test_custom_questionnaire(tmp_path):
    questions = DEFAULT_QUESTIONNAIRE.to_dict()['questions'][:2]
    questionnaire = write_json(tmp_path, "questions.json",
                               {'questions': questions})
    real = _dump(tmp_path, "real.json",
                 vectors([row[:2] for row in TRACE], "real"))
    result = _run("--output-dir", tmp_path, "score-fluents", real, real,
                  "--questionnaire", questionnaire)

    assert result.exit_code == 0, result.output
    report = read_json(os.path.join(str(tmp_path), "consistency.json"))
    assert report['question_ids'] == ['ready_to_pick', 'jar_picked']
    assert sorted(report['agreement']) == ['jar_picked', 'ready_to_pick']


# align
def test_align(tmp_path):
    image = _dump(tmp_path, "image.json", image_pairs(PROJECTIVE_M, GRID[:12]))
    holdout = _dump(tmp_path, "holdout.json",
                    image_pairs(PROJECTIVE_M, GRID[12:]))
    motion = _dump(tmp_path, "motion.json", motion_pairs(np.eye(4), BOX))

    result = _run("--output-dir", tmp_path, "align", "--image-pairs", image,
                  "--holdout", holdout, "--motion-pairs", motion)
    assert result.exit_code == 0, result.output
    bundle = read_json(os.path.join(str(tmp_path), "alignment.json"))
    assert bundle['stages'] == ['homography', 'correction']
    assert sorted(bundle['summary']) == ['correction', 'holdout',
                                         'homography']
    assert bundle['summary']['holdout']['n_points'] == 8
    assert bundle['summary']['holdout']['mean'] < 1e-6
    assert bundle['correction']['kind'] == "correction"


def test_align_argument_errors(tmp_path):
    result = _run("--output-dir", tmp_path, "align")
    assert result.exit_code == 2
    assert _error(result)['error'] == "invalid_input"

    pairs = _dump(tmp_path, "pairs.json", world_pairs(OBLIQUE, BOX))
    result = _run("--output-dir", tmp_path, "align", "--world-pairs", pairs)
    assert result.exit_code == 2
    assert "--extrinsics" in _error(result)['detail']


# synth-eval
def test_synth_eval(tmp_path):
    config = write_json(tmp_path, "config.json",
                        SynthConfig(noise_sigma=1.0).to_dict())
    first, second = (os.path.join(str(tmp_path), name)
                     for name in ("first", "second"))

    outputs = []
    for directory in (first, second):
        result = _run("--output-dir", directory, "synth-eval", config,
                      "--seed", 7, "--trials", 5)
        assert result.exit_code == 0, result.output
        outputs.append(result.stdout)
    assert outputs[0] == outputs[1]

    for name in ("ablation.json", "ablation.txt"):
        with open(os.path.join(first, name), 'rb') as f:
            expected = f.read()
        with open(os.path.join(second, name), 'rb') as f:
            assert f.read() == expected

    lines = outputs[0].splitlines()
    assert lines[0].startswith("Regression method")
    assert [line.split()[0] for line in lines[1:4]] == ["Simple", "Affine",
                                                        "Projective"]
    assert "Trials: 5 evaluated, 0 skipped" in lines
    data = read_json(os.path.join(first, "ablation.json"))
    assert data['n_trials'] == 5
    assert data['n_evaluated'] == 5
    assert not os.path.exists(os.path.join(first, "sensitivity.json"))


def test_synth_eval_seed_from_config(tmp_path):
    seeded = write_json(tmp_path, "seeded.json",
                        SynthConfig(seed=7, n_trials=5,
                                    noise_sigma=1.0).to_dict())
    plain = write_json(tmp_path, "plain.json",
                       SynthConfig(noise_sigma=1.0).to_dict())

    from_config = _run("--output-dir", tmp_path, "synth-eval", seeded)
    from_option = _run("--output-dir", tmp_path, "synth-eval", plain,
                       "--seed", 7, "--trials", 5)
    assert from_config.exit_code == 0, from_config.output
    assert from_option.exit_code == 0, from_option.output
    assert from_config.stdout == from_option.stdout


def test_synth_eval_sensitivity(tmp_path):
    config = write_json(tmp_path, "config.json",
                        SynthConfig(seed=7, n_trials=3).to_dict())
    result = _run("--output-dir", tmp_path, "synth-eval", config,
                  "--sensitivity", "--workers", 2)

    assert result.exit_code == 0, result.output
    report = read_json(os.path.join(str(tmp_path), "sensitivity.json"))
    assert len(report['rows']) == 4
    with open(os.path.join(str(tmp_path), "sensitivity.txt")) as f:
        assert len(f.read().splitlines()) == 5


def test_synth_eval_bad_config(tmp_path):
    config = write_json(tmp_path, "config.json", {'sigma': 1.0})
    result = _run("--output-dir", tmp_path, "synth-eval", config)
    assert result.exit_code == 2
    assert "sigma" in _error(result)['detail']

    config = write_json(tmp_path, "config.json",
                        SynthConfig(image_size=(10, 10), n_trials=2).to_dict())
    result = _run("--output-dir", tmp_path, "synth-eval", config)
    assert result.exit_code == 2
    error = _error(result)
    assert error['error'] == "empty_ablation"
    assert error['skipped'] == 2


# Global options
def test_tolerance_option(tmp_path):
    pairs = _dump(tmp_path, "pairs.json", image_pairs(PROJECTIVE_M, CORNERS))

    result = _run("--tolerance", "rank_ratio=1e-6", "--output-dir", tmp_path,
                  "fit-homography", pairs)
    assert result.exit_code == 0, result.output

    for value in ("rank_ratio", "bogus=1", "rank_ratio=-1",
                  "rank_ratio=abc"):
        result = _run("--tolerance", value, "--output-dir", tmp_path,
                      "fit-homography", pairs)
        assert result.exit_code == 2, value
        assert "--tolerance" in result.stderr


def test_output_dir_from_environment(tmp_path):
    pairs = _dump(tmp_path, "pairs.json", image_pairs(PROJECTIVE_M, CORNERS))
    target = os.path.join(str(tmp_path), "from_env")

    result = _run("fit-homography", pairs,
                  env={'SIM2REAL_OUTPUT_DIR': target})
    assert result.exit_code == 0, result.output
    assert os.path.isfile(os.path.join(target, "homography_report.json"))
