# coding: utf-8

import argparse
import logging
import os
import shutil
import sys

import yaml

from .. import settings
from ..evaluation import (
    ablation,
    format_report,
    format_table,
    joint_accuracy,
    report_frame,
    )
from ..exceptions import (
    EvaluationError,
    GradingException,
    InputError,
    )
from ..explain import (
    criteria_summary,
    dme_text,
    render,
    )
from ..grader import (
    load_model,
    predict_batch,
    save_model,
    train,
    )
from ..maskio import load_manifest
from ..models import (
    FeatureMode,
    PipelineConfig,
    SizeThresholds,
    )
from ..processing import (
    extract_features,
    output_file,
    read_features,
    read_predictions,
    write_features,
    write_lines,
    write_predictions,
    )
from ..synth import (
    LABEL_RULES,
    SynthSpec,
    generate,
    )

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_BAD_INPUT = 2

DEFAULTS = PipelineConfig.from_settings(settings)


def _thresholds_help():
    return 'size thresholds tau0,tau1,tau2,tau3 in pixels (default: {})' \
        .format(','.join(str(v) for v in DEFAULTS.thresholds.as_tuple()))


def add_common_arguments(parser):
    parser.add_argument(
        '--config', dest='config', action='store',
        help='YAML or JSON file of settings, overridden by explicit flags')
    parser.add_argument(
        '--verbose', dest='verbose', action='store_true', default=False,
        help='Log debug messages')


def add_threshold_argument(parser):
    parser.add_argument(
        '--thresholds', dest='thresholds', action='store',
        help=_thresholds_help())


def add_mode_argument(parser):
    parser.add_argument(
        '--mode', dest='mode', choices=[m.value for m in FeatureMode],
        help='feature vector, simple (4 counts) or extended (12 bucketed '
             'counts) (default: {})'.format(DEFAULTS.feature_mode.value))


def add_train_arguments(parser):
    train = DEFAULTS.train
    parser.add_argument(
        '--learning-rate', dest='learning_rate', type=float,
        help='Adam learning rate (default: {})'.format(train.learning_rate))
    parser.add_argument(
        '--batch-size', dest='batch_size', type=int,
        help='mini-batch size (default: {})'.format(train.batch_size))
    parser.add_argument(
        '--dropout', dest='dropout_prob', type=float,
        help='dropout probability (default: {})'.format(train.dropout_prob))
    parser.add_argument(
        '--max-epochs', dest='max_epochs', type=int,
        help='maximum number of epochs (default: {})'
             .format(train.max_epochs))
    parser.add_argument(
        '--patience', dest='patience', type=int,
        help='epochs without validation improvement before stopping, '
             '0 disables early stopping (default: {})'.format(train.patience))
    parser.add_argument(
        '--validation-fraction', dest='validation_fraction', type=float,
        help='share of the training data used for validation (default: {})'
             .format(train.validation_fraction))
    parser.add_argument(
        '--seed', dest='seed', type=int,
        help='seed of every random draw (default: {})'.format(train.seed))
    parser.add_argument(
        '--hidden-dims', dest='hidden_dims', action='store',
        help='comma separated hidden layer widths (default: {})'
             .format(','.join(str(d) for d in train.hidden_dims)))


def pipeline_config(args):
    '''Settings file < --config file < explicit flags.'''
    config = DEFAULTS
    if getattr(args, 'config', None):
        with open(args.config, 'r') as f:
            try:
                values = yaml.safe_load(f.read()) or {}
            except yaml.YAMLError as e:
                raise InputError('{}: invalid config file ({})'
                                 .format(args.config, e))
        if not isinstance(values, dict):
            raise InputError('{}: config must be a mapping'
                             .format(args.config))
        config = config.merged(values)

    flags = {}
    if getattr(args, 'thresholds', None):
        flags['thresholds'] = SizeThresholds.parse(args.thresholds)
    if getattr(args, 'mode', None):
        flags['feature_mode'] = args.mode
    train_flags = {}
    for name in ('learning_rate', 'batch_size', 'dropout_prob', 'max_epochs',
                 'validation_fraction', 'seed'):
        value = getattr(args, name, None)
        if value is not None:
            train_flags[name] = value
    if getattr(args, 'patience', None) is not None:
        train_flags['patience'] = args.patience or None
    if getattr(args, 'hidden_dims', None):
        try:
            train_flags['hidden_dims'] = [
                int(d) for d in args.hidden_dims.split(',')]
        except ValueError:
            raise InputError('--hidden-dims must be comma separated integers')
    if train_flags:
        flags['train'] = train_flags
    if getattr(args, 'test_fraction', None) is not None:
        flags['test_fraction'] = args.test_fraction
    if getattr(args, 'workers', None) is not None:
        flags['workers'] = args.workers
    return config.merged(flags)


def cmd_extract(args):
    config = pipeline_config(args)
    records = load_manifest(args.manifest)
    rows = extract_features(records, config.feature_mode, config.thresholds,
                            workers=config.workers)
    with output_file(args.out) as path:
        write_features(rows, path, config.feature_mode)
    print('Extracted {} {} feature vectors to {}'.format(
        len(rows), config.feature_mode.value, args.out))


def _labeled_dataset(rows, path):
    unlabeled = [row.image_id for row in rows if row.grades is None]
    if unlabeled:
        raise InputError('{}: labels required, {} unlabeled row(s), first '
                         '{!r}'.format(path, len(unlabeled), unlabeled[0]))
    return [(row.features, row.grades) for row in rows]


def cmd_train(args):
    config = pipeline_config(args)
    rows = read_features(args.features)
    dataset = _labeled_dataset(rows, args.features)
    model = train(dataset, config.train, config.thresholds)
    with output_file(args.out_model) as path:
        save_model(model, path)
    print('Trained a {} grader on {} samples, best validation loss {} at '
          'epoch {}, saved to {}'.format(
              model.feature_mode.value, len(dataset),
              model.metadata['best_validation_loss'],
              model.metadata['best_epoch'], args.out_model))


def _predictions(model, rows):
    grades = predict_batch(model, [row.features for row in rows])
    return list(zip([row.image_id for row in rows], grades))


def cmd_predict(args):
    model = load_model(args.model)
    rows = read_features(args.features)
    predictions = _predictions(model, rows)
    with output_file(args.out) as path:
        write_predictions(predictions, path)
    print('Predicted {} images to {}'.format(len(predictions), args.out))


def cmd_explain(args):
    rows = read_features(args.features)
    if args.predictions:
        predicted = dict(read_predictions(args.predictions))
        missing = [row.image_id for row in rows
                   if row.image_id not in predicted]
        if missing:
            raise InputError('{}: no prediction for {!r}'
                             .format(args.predictions, missing[0]))
        predictions = [(row.image_id, predicted[row.image_id])
                       for row in rows]
    elif args.model:
        predictions = _predictions(load_model(args.model), rows)
    else:
        raise InputError('explain needs --model or --predictions')

    lines = []
    for row, (image_id, grade) in zip(rows, predictions):
        lines.append(render(image_id, row.features, grade).rendered)
        if args.dme:
            lines.append(dme_text(image_id, grade))
        if args.totals:
            lines.append(criteria_summary(row.features))
    if args.out:
        with output_file(args.out) as path:
            write_lines(lines, path)
    else:
        for line in lines:
            print(line)


def cmd_evaluate(args):
    truth_rows = read_features(args.truth)
    predictions = read_predictions(args.predictions)
    if len(truth_rows) != len(predictions):
        raise EvaluationError('{} has {} rows but {} has {}'.format(
            args.truth, len(truth_rows), args.predictions, len(predictions)))
    predicted = dict(predictions)
    pairs = []
    for row in truth_rows:
        if row.grades is None:
            raise InputError('{}: labels required, {!r} is unlabeled'
                             .format(args.truth, row.image_id))
        if row.image_id not in predicted:
            raise EvaluationError('{}: no prediction for {!r}'
                                  .format(args.predictions, row.image_id))
        pairs.append((row.grades, predicted[row.image_id]))
    report = joint_accuracy(pairs)
    print(format_report(report))
    if args.out:
        with output_file(args.out) as path:
            report_frame({args.arm: report}).to_csv(
                path, index=False, lineterminator='\n')


def cmd_synth(args):
    values = dict(settings.get('synth') or {})
    for name in ('n_images', 'width', 'height', 'seed', 'label_rule'):
        value = getattr(args, name)
        if value is not None:
            values[name] = value
    if args.max_noise is not None:
        values['noise_count'] = (0, args.max_noise)
    config = pipeline_config(args)
    values['thresholds'] = config.thresholds
    spec = SynthSpec.from_settings(values)

    created = not os.path.exists(args.out_dir)
    try:
        manifest_path = generate(spec, args.out_dir)
    except BaseException:
        if created and os.path.exists(args.out_dir):
            shutil.rmtree(args.out_dir)
        raise
    print('Generated {} images, manifest {}'.format(spec.n_images,
                                                    manifest_path))


def cmd_ablation(args):
    config = pipeline_config(args)
    reports = ablation(args.manifest, config.thresholds, config.train,
                       config.test_fraction, config.workers)
    print(format_table(reports))
    if args.out:
        with output_file(args.out) as path:
            report_frame(reports).to_csv(path, index=False,
                                         lineterminator='\n')


def build_parser():
    parser = argparse.ArgumentParser(
        prog='lesion_grading',
        description='Symbolic lesion features, DR / DME grading and '
                    'explanations')
    subparsers = parser.add_subparsers(dest='command', metavar='command')
    subparsers.required = True

    extract = subparsers.add_parser(
        'extract', help='Extract feature vectors of the images of a manifest')
    add_common_arguments(extract)
    extract.add_argument('--manifest', required=True,
                         help='manifest CSV binding masks and grades')
    add_mode_argument(extract)
    add_threshold_argument(extract)
    extract.add_argument(
        '--workers', type=int,
        help='threads reading masks (default: {})'.format(DEFAULTS.workers))
    extract.add_argument('--out', required=True, help='features CSV to write')
    extract.set_defaults(func=cmd_extract)

    train_parser = subparsers.add_parser(
        'train', help='Train a grader on a labeled features CSV')
    add_common_arguments(train_parser)
    train_parser.add_argument('--features', required=True,
                              help='labeled features CSV')
    add_threshold_argument(train_parser)
    add_train_arguments(train_parser)
    train_parser.add_argument('--out-model', dest='out_model', required=True,
                              help='model JSON file to write')
    train_parser.set_defaults(func=cmd_train)

    predict = subparsers.add_parser(
        'predict', help='Predict the grades of a features CSV')
    add_common_arguments(predict)
    predict.add_argument('--features', required=True, help='features CSV')
    predict.add_argument('--model', required=True, help='model JSON file')
    predict.add_argument('--out', required=True,
                         help='predictions CSV to write')
    predict.set_defaults(func=cmd_predict)

    explain = subparsers.add_parser(
        'explain', help='Write one explanation sentence per image')
    add_common_arguments(explain)
    explain.add_argument('--features', required=True, help='features CSV')
    explain.add_argument('--model', help='model JSON file predicting grades')
    explain.add_argument('--predictions',
                         help='predictions CSV used instead of a model')
    explain.add_argument('--dme', action='store_true', default=False,
                         help='add the DME grade sentence of every image')
    explain.add_argument('--totals', action='store_true', default=False,
                         help='add the region counts summed over sizes')
    explain.add_argument('--out',
                         help='explanations text file (default: stdout)')
    explain.set_defaults(func=cmd_explain)

    evaluate = subparsers.add_parser(
        'evaluate', help='Joint DR / DME accuracy of predictions')
    add_common_arguments(evaluate)
    evaluate.add_argument('--truth', required=True,
                          help='labeled features CSV')
    evaluate.add_argument('--predictions', required=True,
                          help='predictions CSV')
    evaluate.add_argument('--arm', default='model',
                          help='arm name of the report row '
                               '(default: model)')
    evaluate.add_argument('--out', help='report CSV to write')
    evaluate.set_defaults(func=cmd_evaluate)

    synth_defaults = SynthSpec.from_settings(settings.get('synth'))
    synth = subparsers.add_parser(
        'synth', help='Generate a synthetic lesion mask dataset')
    add_common_arguments(synth)
    synth.add_argument('--out-dir', dest='out_dir', required=True,
                       help='directory receiving masks/, manifest.csv and '
                            'ground_truth.csv')
    synth.add_argument('--n-images', dest='n_images', type=int,
                       help='number of images (default: {})'
                            .format(synth_defaults.n_images))
    synth.add_argument('--width', type=int,
                       help='canvas width (default: {})'
                            .format(synth_defaults.width))
    synth.add_argument('--height', type=int,
                       help='canvas height (default: {})'
                            .format(synth_defaults.height))
    synth.add_argument('--seed', type=int,
                       help='random seed (default: {})'
                            .format(synth_defaults.seed))
    synth.add_argument('--label-rule', dest='label_rule', choices=LABEL_RULES,
                       help='labeling rule (default: {})'
                            .format(synth_defaults.label_rule))
    synth.add_argument('--max-noise', dest='max_noise', type=int,
                       help='maximum number of specks of size <= tau0 per '
                            'mask (default: {})'
                            .format(synth_defaults.noise_count[1]))
    add_threshold_argument(synth)
    synth.set_defaults(func=cmd_synth)

    ablation_parser = subparsers.add_parser(
        'ablation', help='Compare simple and extended feature vectors')
    add_common_arguments(ablation_parser)
    ablation_parser.add_argument('--manifest', required=True,
                                 help='labeled manifest CSV')
    add_threshold_argument(ablation_parser)
    add_train_arguments(ablation_parser)
    ablation_parser.add_argument(
        '--test-fraction', dest='test_fraction', type=float,
        help='share of the images held out for testing (default: {})'
             .format(DEFAULTS.test_fraction))
    ablation_parser.add_argument(
        '--workers', type=int,
        help='threads reading masks (default: {})'.format(DEFAULTS.workers))
    ablation_parser.add_argument('--out', help='report CSV to write')
    ablation_parser.set_defaults(func=cmd_ablation)
    return parser


def main(argv=sys.argv):
    parser = build_parser()
    args = parser.parse_args(argv[1:])
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(levelname)s %(name)s: %(message)s',
        stream=sys.stderr)
    try:
        args.func(args)
    except InputError as e:
        logger.error(e.message)
        return EXIT_BAD_INPUT
    except GradingException as e:
        logger.error(e.message)
        return EXIT_INTERNAL
    except OSError as e:
        logger.error('%s: %s', e.filename or '', e.strerror or e)
        return EXIT_BAD_INPUT
    except Exception:
        logger.exception('Internal error')
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
