# -*- coding: utf-8 -*-
'''Joint DR / DME accuracy and the simple vs extended ablation.'''

import logging
from collections import OrderedDict

import numpy
import pandas

from .exceptions import (
    EvaluationError,
    InputError,
    )
from .grader import (
    DME_CLASSES,
    DR_CLASSES,
    predict_batch,
    split_indices,
    train,
    )
from .maskio import load_manifest
from .models import (
    EvalReport,
    FeatureMode,
    SizeThresholds,
    TrainConfig,
    )
from .processing import extract_region_sets
from .symbolic import features

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ('arm', 'n', 'joint_accuracy', 'dr_accuracy',
                  'dme_accuracy')


def joint_accuracy(pairs):
    '''Evaluate (truth, prediction) GradePair pairs.

    A sample counts for the joint accuracy only when both its DR and its
    DME grades are predicted correctly.
    '''
    pairs = list(pairs)
    if not pairs:
        raise EvaluationError('Cannot evaluate an empty prediction list')
    truth = numpy.array([(t.dr, t.dme) for t, _ in pairs])
    predicted = numpy.array([(p.dr, p.dme) for _, p in pairs])
    dr_ok = truth[:, 0] == predicted[:, 0]
    dme_ok = truth[:, 1] == predicted[:, 1]

    dr_confusion = numpy.zeros((DR_CLASSES, DR_CLASSES), dtype=int)
    numpy.add.at(dr_confusion, (truth[:, 0], predicted[:, 0]), 1)
    dme_confusion = numpy.zeros((DME_CLASSES, DME_CLASSES), dtype=int)
    numpy.add.at(dme_confusion, (truth[:, 1], predicted[:, 1]), 1)

    n = len(pairs)
    return EvalReport(joint_accuracy=float(numpy.count_nonzero(
                          dr_ok & dme_ok)) / n,
                      dr_accuracy=float(numpy.count_nonzero(dr_ok)) / n,
                      dme_accuracy=float(numpy.count_nonzero(dme_ok)) / n,
                      dr_confusion=dr_confusion,
                      dme_confusion=dme_confusion,
                      n=n)


def holdout_evaluation(dataset, config=TrainConfig(),
                       thresholds=SizeThresholds(), test_fraction=0.2):
    '''Hold out a test split, train on the rest, evaluate on the test
    split. Returns (model, report).'''
    rng = numpy.random.default_rng(config.seed)
    test, rest = split_indices(len(dataset), test_fraction, rng)
    model = train([dataset[i] for i in rest], config, thresholds)
    predictions = predict_batch(model, [dataset[i][0] for i in test])
    report = joint_accuracy(zip([dataset[i][1] for i in test], predictions))
    return model, report


def ablation_from_region_sets(samples, thresholds=SizeThresholds(),
                              config=TrainConfig(), test_fraction=0.2):
    '''Compare both feature modes on (region sets, GradePair) samples.

    Both arms share the split and the seed, only the feature mode differs.
    '''
    if len(samples) < 3:
        raise InputError('The ablation needs at least 3 labeled images')
    reports = OrderedDict()
    for mode in (FeatureMode.SIMPLE, FeatureMode.EXTENDED):
        dataset = [(features(region_sets, mode, thresholds), label)
                   for region_sets, label in samples]
        _, report = holdout_evaluation(dataset, config, thresholds,
                                       test_fraction)
        logger.info('%s arm: joint accuracy %.4f', mode.value,
                    report.joint_accuracy)
        reports[mode] = report
    return reports


def ablation(manifest_path, thresholds=SizeThresholds(), config=TrainConfig(),
             test_fraction=0.2, workers=1):
    records = load_manifest(manifest_path)
    unlabeled = [r.image_id for r in records if not r.labeled]
    if unlabeled:
        raise InputError('labels required: {} unlabeled image(s), first {!r}'
                         .format(len(unlabeled), unlabeled[0]))
    region_sets = extract_region_sets(records, workers=workers)
    samples = [(sets, record.grades)
               for record, sets in zip(records, region_sets)]
    return ablation_from_region_sets(samples, thresholds, config,
                                     test_fraction)


def report_frame(reports):
    '''Machine readable rows, one per arm.'''
    rows = []
    for arm, report in reports.items():
        rows.append({
            'arm': getattr(arm, 'value', arm),
            'n': report.n,
            'joint_accuracy': '{:.4f}'.format(report.joint_accuracy),
            'dr_accuracy': '{:.4f}'.format(report.dr_accuracy),
            'dme_accuracy': '{:.4f}'.format(report.dme_accuracy),
            })
    return pandas.DataFrame(rows, columns=list(REPORT_COLUMNS))


def format_table(reports):
    lines = ['{:<10} {:>6} {:>8} {:>8} {:>8}'.format(
        'arm', 'n', 'joint', 'DR', 'DME')]
    for arm, report in reports.items():
        lines.append('{:<10} {:>6} {:>8.4f} {:>8.4f} {:>8.4f}'.format(
            getattr(arm, 'value', arm), report.n, report.joint_accuracy,
            report.dr_accuracy, report.dme_accuracy))
    return '\n'.join(lines)


def format_report(report):
    lines = [
        'samples:        {}'.format(report.n),
        'joint accuracy: {:.4f}'.format(report.joint_accuracy),
        'DR accuracy:    {:.4f}'.format(report.dr_accuracy),
        'DME accuracy:   {:.4f}'.format(report.dme_accuracy),
        'DR confusion (rows truth, columns prediction):',
        ]
    lines.extend('  ' + ' '.join('{:>5}'.format(v) for v in row)
                 for row in report.dr_confusion.tolist())
    lines.append('DME confusion (rows truth, columns prediction):')
    lines.extend('  ' + ' '.join('{:>5}'.format(v) for v in row)
                 for row in report.dme_confusion.tolist())
    return '\n'.join(lines)
