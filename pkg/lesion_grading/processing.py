# -*- coding: utf-8 -*-
'''Manifest to features pipeline and the CSV files exchanged between the
command line stages.'''

import contextlib
import datetime
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import pandas

from .exceptions import (
    FeatureFileError,
    InputError,
    )
from .maskio import load_mask
from .models import (
    LESION_CLASSES,
    FeatureMode,
    FeatureVector,
    GradePair,
    SizeThresholds,
    )
from .regions import extract_regions
from .symbolic import features

logger = logging.getLogger(__name__)

PREDICTION_COLUMNS = ('image_id', 'dr_pred', 'dme_pred')


@dataclass(frozen=True)
class FeatureRow:
    image_id: str
    features: FeatureVector
    grades: Optional[GradePair] = None


def feature_columns(mode):
    return ['f{}'.format(k) for k in range(1, mode.length + 1)]


@contextlib.contextmanager
def output_file(path):
    '''Yield a temporary path that replaces `path` only on success.'''
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    tmp_path = '{}.tmp'.format(path)
    try:
        yield tmp_path
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    os.replace(tmp_path, path)


def record_region_sets(record):
    region_sets = {}
    for lesion_class in LESION_CLASSES:
        path = record.mask_paths[lesion_class]
        try:
            mask = load_mask(path, lesion_class)
        except OSError as e:
            raise InputError('{}: cannot read {} mask of {!r} ({})'.format(
                path, lesion_class.name, record.image_id, e.strerror or e))
        region_sets[lesion_class] = extract_regions(mask)
    return region_sets


def extract_region_sets(records, workers=1):
    '''Region sets of every manifest record, in manifest order.

    Records are independent, with workers > 1 they are processed by a
    thread pool. All failing files are reported before giving up.
    '''
    chrono = datetime.datetime.now()
    total = len(records)
    results = []
    failures = []
    last_percent = 0

    def safe(record):
        try:
            return record_region_sets(record), None
        except InputError as e:
            return None, e

    if workers > 1:
        executor = ThreadPoolExecutor(max_workers=workers)
        outcomes = executor.map(safe, records)
    else:
        executor = None
        outcomes = map(safe, records)
    try:
        for current, (region_sets, error) in enumerate(outcomes, start=1):
            if error is not None:
                logger.error(error.message)
                failures.append(error)
            results.append(region_sets)
            percent = int(100.0 * current / total)
            if percent % 10 == 0 and percent != last_percent:
                logger.info('  ... processed %d%%', percent)
                last_percent = percent
    finally:
        if executor is not None:
            executor.shutdown()

    if failures:
        raise InputError('{} of {} images failed, first: {}'.format(
            len(failures), total, failures[0].message))
    logger.info('Extracted regions of %d images in %s', total,
                datetime.datetime.now() - chrono)
    return results


def extract_features(records, mode, thresholds=SizeThresholds(), workers=1):
    mode = FeatureMode.get(mode)
    rows = []
    for record, region_sets in zip(records,
                                   extract_region_sets(records, workers)):
        rows.append(FeatureRow(record.image_id,
                               features(region_sets, mode, thresholds),
                               record.grades))
    return rows


def write_features(rows, path, mode=None):
    if mode is None:
        mode = rows[0].features.mode if rows else FeatureMode.EXTENDED
    mode = FeatureMode.get(mode)
    columns = ['image_id'] + feature_columns(mode) + ['dr_grade', 'dme_grade']
    data = []
    for row in rows:
        if row.features.mode is not mode:
            raise FeatureFileError('Cannot mix feature modes in one file')
        values = [row.image_id] + [str(v) for v in row.features.values]
        if row.grades is None:
            values.extend(['', ''])
        else:
            values.extend([str(row.grades.dr), str(row.grades.dme)])
        data.append(values)
    frame = pandas.DataFrame(data, columns=columns)
    frame.to_csv(path, index=False, lineterminator='\n')
    return path


def _read_csv(path, error):
    try:
        return pandas.read_csv(path, dtype=str, keep_default_na=False,
                               encoding='utf-8')
    except pandas.errors.EmptyDataError:
        raise error('{}: empty file, header required'.format(path))
    except OSError as e:
        raise error('{}: {}'.format(path, e.strerror or e))


def _integer(text, path, line, column):
    text = text.strip()
    if not text.isdigit():
        raise FeatureFileError('{}:{}: {} {!r} is not a natural number'
                               .format(path, line, column, text))
    return int(text)


def read_features(path):
    frame = _read_csv(path, FeatureFileError)
    columns = [c for c in frame.columns if c.startswith('f') and
               c[1:].isdigit()]
    try:
        mode = FeatureMode.for_length(len(columns))
    except InputError:
        raise FeatureFileError('{}: expected 4 or 12 feature columns, got {}'
                               .format(path, len(columns)))
    missing = [c for c in ['image_id'] + feature_columns(mode) +
               ['dr_grade', 'dme_grade'] if c not in frame.columns]
    if missing:
        raise FeatureFileError('{}: missing column(s) {}'
                               .format(path, ', '.join(missing)))

    rows = []
    for line, row in enumerate(frame.to_dict('records'), start=2):
        values = [_integer(row[c], path, line, c)
                  for c in feature_columns(mode)]
        dr, dme = row['dr_grade'].strip(), row['dme_grade'].strip()
        grades = None
        if dr or dme:
            if not (dr and dme):
                raise FeatureFileError(
                    '{}:{}: dr_grade and dme_grade must be given together'
                    .format(path, line))
            try:
                grades = GradePair(_integer(dr, path, line, 'dr_grade'),
                                   _integer(dme, path, line, 'dme_grade'))
            except FeatureFileError:
                raise
            except InputError as e:
                raise FeatureFileError('{}:{}: {}'.format(path, line,
                                                          e.message))
        rows.append(FeatureRow(row['image_id'], FeatureVector(mode, values),
                               grades))
    return rows


def write_predictions(predictions, path):
    '''Write (image_id, GradePair) pairs.'''
    frame = pandas.DataFrame(
        [[image_id, str(grade.dr), str(grade.dme)]
         for image_id, grade in predictions],
        columns=list(PREDICTION_COLUMNS))
    frame.to_csv(path, index=False, lineterminator='\n')
    return path


def read_predictions(path):
    frame = _read_csv(path, FeatureFileError)
    missing = [c for c in PREDICTION_COLUMNS if c not in frame.columns]
    if missing:
        raise FeatureFileError('{}: missing column(s) {}'
                               .format(path, ', '.join(missing)))
    predictions = []
    for line, row in enumerate(frame.to_dict('records'), start=2):
        try:
            grade = GradePair(_integer(row['dr_pred'], path, line, 'dr_pred'),
                              _integer(row['dme_pred'], path, line,
                                       'dme_pred'))
        except FeatureFileError:
            raise
        except InputError as e:
            raise FeatureFileError('{}:{}: {}'.format(path, line, e.message))
        predictions.append((row['image_id'], grade))
    return predictions


def write_lines(lines, path):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for line in lines:
            f.write(line)
            f.write('\n')
    return path
