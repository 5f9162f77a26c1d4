# -*- coding: utf-8 -*-
'''Natural language explanations of a grade from its feature vector.

Only nonzero counts are mentioned. Every rendered sentence can be parsed
back into the image id, the grade name and the feature vector.
'''

import re
from dataclasses import dataclass
from typing import Optional, Tuple

from .exceptions import (
    ModeMismatchError,
    ParseError,
    )
from .models import (
    BUCKET_NAMES,
    DR_NAMES,
    LESION_CLASSES,
    FeatureMode,
    FeatureVector,
    )

LESION_NAMES = tuple(c.name for c in LESION_CLASSES)

NO_LESIONS = 'no lesion regions are detected'

_GRADES = '|'.join(re.escape(name) for name in DR_NAMES)
_SIMPLE = re.compile(
    r'The DR diagnosis of "(?P<id>.*)" is "(?P<grade>' + _GRADES +
    r')" because (?P<body>.*)\.', re.S)
_EXTENDED = re.compile(
    r'The image (?P<id>.+) is classified as (?P<grade>' + _GRADES +
    r') because (?P<body>.+) are detected\.', re.S)
_SIMPLE_BODY = re.compile(r'there are (?P<clauses>.+) regions, respectively')
_SIMPLE_CLAUSE = re.compile(r'(?P<count>[1-9][0-9]*) (?P<lesion>MA|HE|SE|EX)')
_EXTENDED_CLAUSE = re.compile(
    r'(?P<count>[1-9][0-9]*) (?P<size>small|medium|large) '
    r'(?P<lesion>MA|HE|SE|EX)(?P<plural>s?)')


@dataclass(frozen=True)
class Explanation:
    image_id: str
    grade_text: str
    # (count, size word or None, lesion name), nonzero counts only
    clauses: Tuple[Tuple[int, Optional[str], str], ...]
    rendered: str

    def __str__(self):
        return self.rendered


def _join(parts):
    if len(parts) == 1:
        return parts[0]
    return '{} and {}'.format(', '.join(parts[:-1]), parts[-1])


def _grade_text(grade):
    if isinstance(grade, str):
        if grade not in DR_NAMES:
            raise ParseError('Unknown DR grade {!r}'.format(grade))
        return grade
    return grade.dr_name


def render_simple(image_id, features, grade):
    if features.mode is not FeatureMode.SIMPLE:
        raise ModeMismatchError('render_simple needs a simple feature vector')
    grade_text = _grade_text(grade)
    clauses = tuple((count, None, name)
                    for count, name in zip(features.values, LESION_NAMES)
                    if count)
    if clauses:
        body = 'there are {} regions, respectively'.format(
            _join(['{} {}'.format(count, name)
                   for count, _, name in clauses]))
    else:
        body = NO_LESIONS
    rendered = 'The DR diagnosis of "{}" is "{}" because {}.'.format(
        image_id, grade_text, body)
    return Explanation(image_id, grade_text, clauses, rendered)


def render_extended(image_id, features, grade):
    if features.mode is not FeatureMode.EXTENDED:
        raise ModeMismatchError(
            'render_extended needs an extended feature vector')
    grade_text = _grade_text(grade)
    clauses = tuple((count, BUCKET_NAMES[k % 3], LESION_NAMES[k // 3])
                    for k, count in enumerate(features.values) if count)
    if clauses:
        body = '{} are detected'.format(_join([
            '{} {} {}{}'.format(count, size, name, '' if count == 1 else 's')
            for count, size, name in clauses]))
    else:
        body = NO_LESIONS
    rendered = 'The image {} is classified as {} because {}.'.format(
        image_id, grade_text, body)
    return Explanation(image_id, grade_text, clauses, rendered)


def render(image_id, features, grade):
    if features.mode is FeatureMode.SIMPLE:
        return render_simple(image_id, features, grade)
    return render_extended(image_id, features, grade)


def _split_clauses(text):
    head, sep, last = text.rpartition(' and ')
    if not sep:
        return [text]
    return head.split(', ') + [last]


def parse(rendered):
    '''Return (image_id, grade_text, FeatureVector) of a rendered sentence.'''
    rendered = rendered.rstrip('\r\n')
    match = _SIMPLE.fullmatch(rendered)
    if match:
        mode = FeatureMode.SIMPLE
        body = match.group('body')
        if body == NO_LESIONS:
            texts = []
        else:
            body_match = _SIMPLE_BODY.fullmatch(body)
            if not body_match:
                raise ParseError('Cannot parse lesion counts in {!r}'
                                 .format(rendered))
            texts = _split_clauses(body_match.group('clauses'))
    else:
        match = _EXTENDED.fullmatch(rendered)
        if not match:
            raise ParseError('Not an explanation sentence: {!r}'
                             .format(rendered))
        mode = FeatureMode.EXTENDED
        body = match.group('body')
        texts = [] if body == 'no lesion regions' else _split_clauses(body)

    values = [0] * mode.length
    last_position = -1
    for text in texts:
        if mode is FeatureMode.SIMPLE:
            clause = _SIMPLE_CLAUSE.fullmatch(text)
            if clause is None:
                raise ParseError('Cannot parse clause {!r}'.format(text))
            position = LESION_NAMES.index(clause.group('lesion'))
        else:
            clause = _EXTENDED_CLAUSE.fullmatch(text)
            if clause is None:
                raise ParseError('Cannot parse clause {!r}'.format(text))
            count = int(clause.group('count'))
            if (count == 1) == bool(clause.group('plural')):
                raise ParseError('Number agreement broken in {!r}'
                                 .format(text))
            position = 3 * LESION_NAMES.index(clause.group('lesion')) + \
                BUCKET_NAMES.index(clause.group('size'))
        if position <= last_position:
            raise ParseError('Clauses out of order in {!r}'.format(rendered))
        last_position = position
        values[position] = int(clause.group('count'))

    return (match.group('id'), match.group('grade'),
            FeatureVector(mode, values))


def criteria_summary(features):
    '''Counts summed over sizes, to compare with the grading criteria.'''
    totals = features.class_totals()
    return 'In total: {} regions.'.format(_join(
        ['{} {}'.format(count, name)
         for count, name in zip(totals, LESION_NAMES)]))


def dme_text(image_id, grade):
    return 'The DME grade of "{}" is "{}".'.format(image_id, grade.dme_name)
