# -*- coding: utf-8 -*-
'''Binary lesion masks stored as PGM (P2 / P5) and the dataset manifest.

A pixel is lesion foreground when its sample value is above 127. Masks are
read at their native resolution, the four masks of an image may differ in
size.
'''

import logging
import os
import re

import numpy
import pandas

from .exceptions import (
    ManifestError,
    MaskFormatError,
    )
from .models import (
    LESION_CLASSES,
    LesionMask,
    ManifestRecord,
    )

logger = logging.getLogger(__name__)

FOREGROUND_THRESHOLD = 127

_WHITESPACE = b' \t\r\n\x0b\x0c'
_TOKEN = re.compile(rb'\S+')

MANIFEST_COLUMNS = ('image_id', 'ma_mask', 'he_mask', 'se_mask', 'ex_mask',
                    'dr_grade', 'dme_grade')
MASK_COLUMNS = dict(zip(LESION_CLASSES, MANIFEST_COLUMNS[1:5]))


def load_mask(path, lesion_class):
    with open(path, 'rb') as f:
        data = f.read()
    return parse_pgm(data, lesion_class, path=path)


def parse_pgm(data, lesion_class, path='<bytes>'):
    magic, offset, end = _header_token(data, 0, path)
    if offset != 0 or magic not in (b'P2', b'P5'):
        raise MaskFormatError(path, offset, MaskFormatError.MALFORMED_HEADER,
                              'expected P2 or P5 magic number')

    values = []
    for name in ('width', 'height', 'maxval'):
        token, offset, end = _header_token(data, end, path)
        if not token.isdigit():
            raise MaskFormatError(path, offset,
                                  MaskFormatError.MALFORMED_HEADER,
                                  '{} is not a decimal number'.format(name))
        value = int(token)
        if name == 'maxval':
            if value > 255:
                raise MaskFormatError(path, offset, MaskFormatError.MAXVAL,
                                      'maxval is {}'.format(value))
            if value == 0:
                raise MaskFormatError(path, offset,
                                      MaskFormatError.MALFORMED_HEADER,
                                      'maxval must be positive')
        elif value == 0:
            raise MaskFormatError(path, offset,
                                  MaskFormatError.ZERO_DIMENSION,
                                  '{} is 0'.format(name))
        values.append(value)
    width, height, maxval = values

    # exactly one whitespace byte separates maxval from the raster
    if end < len(data) and data[end:end + 1] not in _WHITESPACE:
        raise MaskFormatError(path, end, MaskFormatError.MALFORMED_HEADER,
                              'expected whitespace after maxval')
    if magic == b'P5':
        samples = _binary_samples(data, end, width * height, path)
    else:
        samples = _ascii_samples(data, end, width * height, maxval, path)

    too_large = numpy.flatnonzero(samples > maxval)
    if too_large.size:
        index = int(too_large[0])
        raise MaskFormatError(path, _sample_offset(data, magic, end, index),
                              MaskFormatError.BAD_SAMPLE,
                              'sample {} exceeds maxval {}'
                              .format(int(samples[index]), maxval))

    pixels = (samples > FOREGROUND_THRESHOLD).reshape(height, width)
    return LesionMask(lesion_class, pixels)


def _header_token(data, pos, path):
    '''Return (token, start, end) of the next header token, skipping
    whitespace and comments.'''
    size = len(data)
    while pos < size:
        byte = data[pos:pos + 1]
        if byte == b'#':
            while pos < size and data[pos:pos + 1] not in (b'\n', b'\r'):
                pos += 1
        elif byte in _WHITESPACE:
            pos += 1
        else:
            break
    if pos >= size:
        raise MaskFormatError(path, pos, MaskFormatError.MALFORMED_HEADER,
                              'unexpected end of header')
    start = pos
    while pos < size and data[pos:pos + 1] not in _WHITESPACE \
            and data[pos:pos + 1] != b'#':
        pos += 1
    return data[start:pos], start, pos


def _binary_samples(data, end, count, path):
    if end >= len(data):
        raise MaskFormatError(path, end, MaskFormatError.TRUNCATED_PAYLOAD,
                              'no raster data')
    start = end + 1
    available = len(data) - start
    if available < count:
        raise MaskFormatError(path, len(data),
                              MaskFormatError.TRUNCATED_PAYLOAD,
                              'expected {} bytes of raster, got {}'
                              .format(count, available))
    return numpy.frombuffer(data, dtype=numpy.uint8, count=count,
                            offset=start).astype(numpy.int64)


def _ascii_samples(data, end, count, maxval, path):
    tokens = data[end:].split()
    if len(tokens) < count:
        raise MaskFormatError(path, len(data),
                              MaskFormatError.TRUNCATED_PAYLOAD,
                              'expected {} samples, got {}'
                              .format(count, len(tokens)))
    samples = []
    for index, token in enumerate(tokens[:count]):
        if not token.isdigit():
            raise MaskFormatError(
                path, _sample_offset(data, b'P2', end, index),
                MaskFormatError.BAD_SAMPLE,
                '{!r} is not a decimal number'.format(token.decode('latin-1')))
        value = int(token)
        if value > maxval:
            raise MaskFormatError(
                path, _sample_offset(data, b'P2', end, index),
                MaskFormatError.BAD_SAMPLE,
                'sample {} exceeds maxval {}'.format(value, maxval))
        samples.append(value)
    return numpy.array(samples, dtype=numpy.int64)


def _sample_offset(data, magic, end, index):
    if magic == b'P5':
        return end + 1 + index
    for i, match in enumerate(_TOKEN.finditer(data, end)):
        if i == index:
            return match.start()
    return len(data)


def save_mask(mask, path):
    '''Write a mask as binary PGM, maxval 255.'''
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    header = 'P5\n{} {}\n255\n'.format(mask.width, mask.height)
    payload = numpy.where(mask.pixels, 255, 0).astype(numpy.uint8)
    with open(path, 'wb') as f:
        f.write(header.encode('ascii'))
        f.write(payload.tobytes())
    return path


def load_manifest(path):
    try:
        frame = pandas.read_csv(path, dtype=str, keep_default_na=False,
                                encoding='utf-8')
    except pandas.errors.EmptyDataError:
        raise ManifestError('{}: empty manifest, header required'
                            .format(path))
    missing = [c for c in MANIFEST_COLUMNS if c not in frame.columns]
    if missing:
        raise ManifestError('{}: missing column(s) {}'
                            .format(path, ', '.join(missing)))

    base_dir = os.path.dirname(os.path.abspath(path))
    records = []
    seen = set()
    for line, row in enumerate(frame.itertuples(index=False), start=2):
        row = row._asdict()
        image_id = row['image_id'].strip()
        if not image_id:
            raise ManifestError('{}:{}: empty image_id'.format(path, line))
        if image_id in seen:
            raise ManifestError('{}:{}: duplicate image_id {!r}'
                                .format(path, line, image_id))
        seen.add(image_id)

        mask_paths = {}
        for lesion_class, column in MASK_COLUMNS.items():
            mask_path = row[column].strip()
            if not mask_path:
                raise ManifestError('{}:{}: no {} for {!r}'
                                    .format(path, line, column, image_id))
            mask_paths[lesion_class] = os.path.join(base_dir, mask_path)

        dr_grade = _grade(row['dr_grade'], 4, 'dr_grade', path, line)
        dme_grade = _grade(row['dme_grade'], 2, 'dme_grade', path, line)
        if (dr_grade is None) != (dme_grade is None):
            raise ManifestError('{}:{}: dr_grade and dme_grade must be given '
                                'together'.format(path, line))
        records.append(ManifestRecord(image_id, mask_paths,
                                      dr_grade, dme_grade))
    logger.debug('%s: %d manifest records', path, len(records))
    return records


def _grade(text, highest, column, path, line):
    text = text.strip()
    if not text:
        return None
    if not text.isdigit() or int(text) > highest:
        raise ManifestError('{}:{}: {} {!r} out of range 0-{}'
                            .format(path, line, column, text, highest))
    return int(text)


def write_manifest(records, path):
    '''Write manifest records, mask paths relative to the manifest folder.'''
    base_dir = os.path.dirname(os.path.abspath(path))
    rows = []
    for record in records:
        row = {'image_id': record.image_id}
        for lesion_class, column in MASK_COLUMNS.items():
            mask_path = record.mask_paths[lesion_class]
            if os.path.isabs(mask_path):
                mask_path = os.path.relpath(mask_path, base_dir)
            row[column] = mask_path.replace(os.sep, '/')
        row['dr_grade'] = '' if record.dr_grade is None \
            else str(record.dr_grade)
        row['dme_grade'] = '' if record.dme_grade is None \
            else str(record.dme_grade)
        rows.append(row)
    frame = pandas.DataFrame(rows, columns=list(MANIFEST_COLUMNS))
    frame.to_csv(path, index=False, lineterminator='\n')
    return path
