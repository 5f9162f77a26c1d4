# -*- coding: utf-8 -*-
'''Synthetic lesion mask datasets with known region counts and labels.

Regions are filled rectangles and discs planted so that pixels of two
different regions are never 8-adjacent, which makes the planted counts and
sizes exactly what region extraction finds. Labels follow the severity
grading criteria where the four lesion classes can express them, with
size based proxies for PDR (large hemorrhages) and macular edema
(medium or large hard exudates). The proxies are not clinical rules.
'''

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy
import pandas

from .exceptions import (
    InputError,
    PackingError,
    )
from .maskio import (
    save_mask,
    write_manifest,
    )
from .models import (
    BUCKET_NAMES,
    LESION_CLASSES,
    FeatureMode,
    FeatureVector,
    GradePair,
    LesionClass,
    LesionMask,
    ManifestRecord,
    SizeThresholds,
    )

logger = logging.getLogger(__name__)

SIZE_AWARE = 'size_aware'
COUNT_ONLY = 'count_only'
LABEL_RULES = (SIZE_AWARE, COUNT_ONLY)

GROUND_TRUTH_COLUMNS = (['image_id'] +
                        ['{}_{}'.format(c.name.lower(), b)
                         for c in LESION_CLASSES for b in BUCKET_NAMES] +
                        ['dr_grade', 'dme_grade'])


def _default_presence():
    return {'MA': 0.85, 'HE': 0.6, 'SE': 0.35, 'EX': 0.55}


def _default_count_ranges():
    # when a class is present, the count of each bucket is drawn uniformly
    # from one of the listed (low, high) ranges, picked uniformly
    return {
        'MA': {'small': [(1, 15), (20, 45)],
               'medium': [(0, 0)],
               'large': [(0, 0)]},
        'HE': {'small': [(1, 10), (26, 40)],
               'medium': [(0, 2)],
               'large': [(0, 1), (3, 4)]},
        'SE': {'small': [(1, 6)],
               'medium': [(0, 1)],
               'large': [(0, 1)]},
        'EX': {'small': [(1, 40)],
               'medium': [(0, 0), (1, 3)],
               'large': [(0, 0), (1, 2)]},
        }


def _default_size_ranges():
    return {'small': (11, 120), 'medium': (501, 1000), 'large': (1001, 2500)}


@dataclass(frozen=True)
class SynthSpec:
    n_images: int = 100
    width: int = 1024
    height: int = 1024
    seed: int = 42
    label_rule: str = SIZE_AWARE
    thresholds: SizeThresholds = SizeThresholds()
    # probability that a lesion class appears in an image
    presence: Dict[str, float] = field(default_factory=_default_presence)
    count_ranges: Dict[str, Dict[str, List[Tuple[int, int]]]] = field(
        default_factory=_default_count_ranges)
    # pixel count range of each bucket, inside the bucket's thresholds
    size_ranges: Dict[str, Tuple[int, int]] = field(
        default_factory=_default_size_ranges)
    # specks of size 1..tau0 added to every mask, absent from the labels
    noise_count: Tuple[int, int] = (0, 8)
    max_attempts: int = 500
    image_prefix: str = 'synth_'

    def __post_init__(self):
        if self.n_images < 0:
            raise InputError('n_images must be nonnegative')
        if self.width < 1 or self.height < 1:
            raise InputError('Canvas must be at least 1x1')
        if self.label_rule not in LABEL_RULES:
            raise InputError('Unknown label rule {!r}'.format(self.label_rule))
        tau = self.thresholds.as_tuple()
        for k, bucket in enumerate(BUCKET_NAMES):
            low, high = self.size_ranges[bucket]
            if not tau[k] < low <= high <= tau[k + 1]:
                raise InputError(
                    '{} sizes {}-{} fall outside ({}, {}]'
                    .format(bucket, low, high, tau[k], tau[k + 1]))
        for lesion_class in LESION_CLASSES:
            for bucket in BUCKET_NAMES:
                for low, high in self.count_ranges[lesion_class.name][bucket]:
                    if not 0 <= low <= high:
                        raise InputError('Invalid count range ({}, {})'
                                         .format(low, high))
        if not 0 <= self.noise_count[0] <= self.noise_count[1]:
            raise InputError('Invalid noise count range')

    @classmethod
    def from_settings(cls, values):
        values = dict(values or {})
        if isinstance(values.get('thresholds'), dict):
            values['thresholds'] = SizeThresholds(**values['thresholds'])
        if 'noise_count' in values:
            values['noise_count'] = tuple(values['noise_count'])
        return cls(**values)


@dataclass
class SynthImage:
    image_id: str
    masks: Dict[LesionClass, LesionMask]
    # (small, medium, large) planted counts per lesion class
    planted: Dict[LesionClass, Tuple[int, int, int]]
    # sizes of every planted region, specks included
    planted_sizes: Dict[LesionClass, List[int]]
    grades: GradePair

    def bucket_counts(self):
        counts = []
        for lesion_class in LESION_CLASSES:
            counts.extend(self.planted[lesion_class])
        return tuple(counts)


def label_rule(counts, rule=SIZE_AWARE):
    '''Grade an image from its 12 (class, bucket) region counts.'''
    if rule not in LABEL_RULES:
        raise InputError('Unknown label rule {!r}'.format(rule))
    if isinstance(counts, FeatureVector):
        if counts.mode is not FeatureMode.EXTENDED:
            raise InputError('label_rule needs bucketed counts')
        counts = counts.values
    counts = [int(c) for c in counts]
    if len(counts) != 12 or any(c < 0 for c in counts):
        raise InputError('label_rule needs 12 nonnegative counts')
    ma, he, se, ex = [counts[3 * k:3 * k + 3] for k in range(4)]
    totals = [sum(ma), sum(he), sum(se), sum(ex)]

    if not any(totals):
        dr = 0
    elif not any(totals[1:]):
        dr = 1
    elif rule == SIZE_AWARE:
        if he[2] >= 3:
            dr = 4
        elif totals[1] > 20:
            dr = 3
        else:
            dr = 2
    else:
        if totals[1] > 40:
            dr = 4
        elif totals[1] > 20:
            dr = 3
        else:
            dr = 2

    if totals[3] == 0:
        dme = 0
    elif rule == SIZE_AWARE:
        dme = 2 if ex[1] + ex[2] > 0 else 1
    else:
        dme = 2 if totals[3] > 20 else 1
    return GradePair(dr, dme)


_DISCS = {}


def _disc(radius):
    if radius not in _DISCS:
        y, x = numpy.ogrid[-radius:radius + 1, -radius:radius + 1]
        _DISCS[radius] = x * x + y * y <= radius * radius
    return _DISCS[radius]


def _disc_radii(low, high):
    radii = []
    radius = 0
    while True:
        area = int(_disc(radius).sum())
        if area > high:
            return radii
        if area >= low:
            radii.append(radius)
        radius += 1


def _draw_shape(low, high, rng, max_width):
    '''Boolean patch holding one connected region of low..high pixels.'''
    if rng.random() < 0.5:
        radii = [r for r in _disc_radii(low, high) if 2 * r + 1 <= max_width]
        if radii:
            return _disc(radii[int(rng.integers(len(radii)))]).copy()
    size = int(rng.integers(low, high + 1))
    side = math.sqrt(size) * rng.uniform(0.5, 2.0)
    width = int(min(max(round(side), 1), size, max_width))
    height = int(math.ceil(size / float(width)))
    patch = numpy.zeros((height, width), dtype=bool)
    # full rows then a partial row starting at the left edge
    patch.flat[:size] = True
    return patch


def _pack(patches, width, height, rng, max_attempts, where):
    canvas = numpy.zeros((height, width), dtype=bool)
    occupied = numpy.zeros((height, width), dtype=bool)
    for patch in sorted(patches, key=lambda p: -p.size):
        rows, cols = patch.shape
        if rows > height or cols > width:
            raise PackingError('{}: a {}x{} region does not fit a {}x{} '
                               'canvas'.format(where, rows, cols, width,
                                               height))
        for _ in range(max_attempts):
            top = int(rng.integers(0, height - rows + 1))
            left = int(rng.integers(0, width - cols + 1))
            # one free pixel around the box keeps regions 8-disconnected
            if not occupied[max(top - 1, 0):top + rows + 1,
                            max(left - 1, 0):left + cols + 1].any():
                occupied[top:top + rows, left:left + cols] = True
                canvas[top:top + rows, left:left + cols] |= patch
                break
        else:
            raise PackingError('{}: cannot place {} regions on a {}x{} '
                               'canvas after {} attempts'
                               .format(where, len(patches), width, height,
                                       max_attempts))
    return canvas


def iter_images(spec):
    '''Yield the SynthImage objects of a spec one by one, deterministic
    for a given seed.'''
    rng = numpy.random.default_rng(spec.seed)
    digits = max(len(str(max(spec.n_images - 1, 0))), 4)
    tau0 = spec.thresholds.tau0
    last_percent = 0
    for index in range(spec.n_images):
        image_id = '{}{:0{}d}'.format(spec.image_prefix, index, digits)
        masks, planted, planted_sizes = {}, {}, {}
        for lesion_class in LESION_CLASSES:
            name = lesion_class.name
            counts = [0, 0, 0]
            if rng.random() < spec.presence.get(name, 0.0):
                for k, bucket in enumerate(BUCKET_NAMES):
                    ranges = spec.count_ranges[name][bucket]
                    low, high = ranges[int(rng.integers(len(ranges)))]
                    counts[k] = int(rng.integers(low, high + 1))
            patches = []
            for k, bucket in enumerate(BUCKET_NAMES):
                low, high = spec.size_ranges[bucket]
                patches.extend(_draw_shape(low, high, rng, spec.width)
                               for _ in range(counts[k]))
            noise = int(rng.integers(spec.noise_count[0],
                                     spec.noise_count[1] + 1))
            patches.extend(_draw_shape(1, tau0, rng, spec.width)
                           for _ in range(noise))

            where = '{} {}'.format(image_id, name)
            masks[lesion_class] = LesionMask(
                lesion_class, _pack(patches, spec.width, spec.height, rng,
                                    spec.max_attempts, where))
            planted[lesion_class] = tuple(counts)
            planted_sizes[lesion_class] = sorted(int(p.sum())
                                                 for p in patches)

        image = SynthImage(image_id, masks, planted, planted_sizes, None)
        image.grades = label_rule(image.bucket_counts(), spec.label_rule)
        yield image

        percent = int(100.0 * (index + 1) / spec.n_images)
        if percent % 10 == 0 and percent != last_percent:
            logger.info('  ... generated %d%%', percent)
            last_percent = percent


def generate_images(spec):
    return list(iter_images(spec))


def generate(spec, out_dir):
    '''Write masks, manifest.csv and ground_truth.csv under out_dir and
    return the manifest path.'''
    mask_dir = os.path.join(out_dir, 'masks')
    os.makedirs(mask_dir, exist_ok=True)
    records = []
    truth = []
    for image in iter_images(spec):
        mask_paths = {}
        for lesion_class, mask in image.masks.items():
            filename = '{}_{}.pgm'.format(image.image_id, lesion_class.name)
            save_mask(mask, os.path.join(mask_dir, filename))
            mask_paths[lesion_class] = 'masks/{}'.format(filename)
        records.append(ManifestRecord(image.image_id, mask_paths,
                                      image.grades.dr, image.grades.dme))
        truth.append([image.image_id] +
                     [str(c) for c in image.bucket_counts()] +
                     [str(image.grades.dr), str(image.grades.dme)])

    manifest_path = os.path.join(out_dir, 'manifest.csv')
    write_manifest(records, manifest_path)
    pandas.DataFrame(truth, columns=GROUND_TRUTH_COLUMNS).to_csv(
        os.path.join(out_dir, 'ground_truth.csv'), index=False,
        lineterminator='\n')
    logger.info('Generated %d synthetic images in %s', len(records), out_dir)
    return manifest_path


def read_ground_truth(path):
    '''Return {image_id: (12 planted counts, GradePair)}.'''
    frame = pandas.read_csv(path, dtype=str, keep_default_na=False)
    truth = {}
    for row in frame.to_dict('records'):
        counts = tuple(int(row[c]) for c in GROUND_TRUTH_COLUMNS[1:13])
        truth[row['image_id']] = (counts, GradePair(int(row['dr_grade']),
                                                    int(row['dme_grade'])))
    return truth
