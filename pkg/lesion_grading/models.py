# coding: utf-8
import enum
from dataclasses import dataclass, field, fields, replace
from typing import Dict, Optional, Tuple

import numpy

from .exceptions import (
    InputError,
    ThresholdError,
    )


class LesionClass(enum.IntEnum):
    # the index is the position of the class in the feature vectors (1-based)
    MA = 1
    HE = 2
    SE = 3
    EX = 4

    @classmethod
    def get(cls, name):
        try:
            return cls[name.upper()]
        except KeyError:
            raise InputError('Unknown lesion class {!r}'.format(name))


LESION_CLASSES = tuple(LesionClass)


@dataclass(eq=False)
class LesionMask:
    lesion_class: LesionClass
    # boolean array of shape (height, width), True marks lesion foreground
    pixels: numpy.ndarray

    def __post_init__(self):
        self.pixels = numpy.ascontiguousarray(self.pixels, dtype=bool)
        if self.pixels.ndim != 2:
            raise InputError('Lesion mask must be two dimensional')
        if self.pixels.shape[0] < 1 or self.pixels.shape[1] < 1:
            raise InputError('Lesion mask must be at least 1x1')

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]

    def foreground_count(self):
        return int(numpy.count_nonzero(self.pixels))

    def __eq__(self, other):
        if not isinstance(other, LesionMask):
            return NotImplemented
        return (self.lesion_class == other.lesion_class and
                self.pixels.shape == other.pixels.shape and
                bool(numpy.array_equal(self.pixels, other.pixels)))


DR_NAMES = ('no DR', 'mild NPDR', 'moderate NPDR', 'severe NPDR', 'PDR')
DME_NAMES = ('no EX', 'EX outside the macula center',
             'EX within the macula center')


@dataclass(frozen=True)
class GradePair:
    # 0 no DR, 1 mild NPDR, 2 moderate NPDR, 3 severe NPDR, 4 PDR
    dr: int
    # 0 no EX, 1 EX outside the macula center, 2 EX within it
    dme: int

    def __post_init__(self):
        if not 0 <= self.dr < len(DR_NAMES):
            raise InputError('DR grade {} out of range 0-4'.format(self.dr))
        if not 0 <= self.dme < len(DME_NAMES):
            raise InputError('DME grade {} out of range 0-2'.format(self.dme))

    @property
    def dr_name(self):
        return DR_NAMES[self.dr]

    @property
    def dme_name(self):
        return DME_NAMES[self.dme]


@dataclass(frozen=True)
class ManifestRecord:
    image_id: str
    # mask file path of each of the four lesion classes
    mask_paths: Dict[LesionClass, str]
    # grades are both present (labeled record) or both None
    dr_grade: Optional[int] = None
    dme_grade: Optional[int] = None

    @property
    def labeled(self):
        return self.dr_grade is not None

    @property
    def grades(self):
        if not self.labeled:
            return None
        return GradePair(self.dr_grade, self.dme_grade)


@dataclass(frozen=True)
class Region:
    # number of connected pixels
    size: int
    # (min_row, min_col, max_row, max_col), inclusive
    bbox: Tuple[int, int, int, int]
    # lexicographically smallest (row, col) of the region
    seed_pixel: Tuple[int, int]


@dataclass(frozen=True)
class RegionSet:
    lesion_class: LesionClass
    # sorted by seed_pixel
    regions: Tuple[Region, ...] = ()

    def __len__(self):
        return len(self.regions)

    def sizes(self):
        return [region.size for region in self.regions]


@dataclass(frozen=True)
class SizeThresholds:
    tau0: int = 10
    tau1: int = 500
    tau2: int = 1000
    tau3: int = 10000

    def __post_init__(self):
        values = self.as_tuple()
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ThresholdError(
                'Thresholds must be strictly increasing, got {}'
                .format(', '.join(str(v) for v in values)))

    def as_tuple(self):
        return (self.tau0, self.tau1, self.tau2, self.tau3)

    def as_dict(self):
        return dict(zip(('tau0', 'tau1', 'tau2', 'tau3'), self.as_tuple()))

    @classmethod
    def parse(cls, text):
        '''Build thresholds from a "10,500,1000,10000" string.'''
        parts = [p.strip() for p in text.split(',')]
        if len(parts) != 4:
            raise ThresholdError(
                'Expected 4 comma separated thresholds, got {!r}'
                .format(text))
        try:
            return cls(*[int(p) for p in parts])
        except ValueError:
            raise ThresholdError('Thresholds must be integers, got {!r}'
                                 .format(text))


@dataclass(frozen=True)
class SizeBuckets:
    small: Tuple[Region, ...] = ()
    medium: Tuple[Region, ...] = ()
    large: Tuple[Region, ...] = ()
    # size <= tau0 or size > tau3
    discarded: Tuple[Region, ...] = ()

    def counts(self):
        return (len(self.small), len(self.medium), len(self.large))


class FeatureMode(enum.Enum):
    SIMPLE = 'simple'
    EXTENDED = 'extended'

    @property
    def length(self):
        return 4 if self is FeatureMode.SIMPLE else 12

    @classmethod
    def get(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InputError('Unknown feature mode {!r}'.format(value))

    @classmethod
    def for_length(cls, length):
        for mode in cls:
            if mode.length == length:
                return mode
        raise InputError('No feature mode has {} features'.format(length))


BUCKET_NAMES = ('small', 'medium', 'large')


@dataclass(frozen=True)
class FeatureVector:
    mode: FeatureMode
    # ordered MA, HE, SE, EX; extended vectors hold a
    # (small, medium, large) triple per lesion class
    values: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, 'values', tuple(int(v) for v in self.values))
        if len(self.values) != self.mode.length:
            raise InputError('{} feature vector needs {} values, got {}'
                             .format(self.mode.value, self.mode.length,
                                     len(self.values)))
        if any(v < 0 for v in self.values):
            raise InputError('Feature values must be nonnegative')

    def class_totals(self):
        '''Region count per lesion class, summed over sizes.'''
        if self.mode is FeatureMode.SIMPLE:
            return self.values
        return tuple(sum(self.values[3 * k:3 * k + 3]) for k in range(4))


DEFAULT_HIDDEN_DIMS = (25, 50, 75, 100, 75, 50, 25, 12)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 16
    dropout_prob: float = 0.1
    max_epochs: int = 20
    # None disables early stopping
    patience: Optional[int] = 3
    validation_fraction: float = 0.2
    seed: int = 42
    hidden_dims: Tuple[int, ...] = DEFAULT_HIDDEN_DIMS

    def __post_init__(self):
        object.__setattr__(self, 'hidden_dims',
                           tuple(int(d) for d in self.hidden_dims))
        if not 0 < self.validation_fraction < 1:
            raise InputError('validation_fraction must be in (0, 1)')
        if self.batch_size < 1:
            raise InputError('batch_size must be at least 1')
        if not 0 <= self.dropout_prob < 1:
            raise InputError('dropout_prob must be in [0, 1)')
        if self.max_epochs < 1:
            raise InputError('max_epochs must be at least 1')
        if self.patience is not None and self.patience < 1:
            raise InputError('patience must be at least 1')
        if not self.hidden_dims or any(d < 1 for d in self.hidden_dims):
            raise InputError('hidden_dims must be positive widths')

    @classmethod
    def from_dict(cls, values):
        known = set(f.name for f in fields(cls))
        unknown = set(values) - known
        if unknown:
            raise InputError('Unknown training settings: {}'
                             .format(', '.join(sorted(unknown))))
        return cls(**values)

    def as_dict(self):
        return dict((f.name, getattr(self, f.name)) for f in fields(self))


@dataclass(frozen=True)
class EvalReport:
    joint_accuracy: float
    dr_accuracy: float
    dme_accuracy: float
    # rows are truths, columns predictions
    dr_confusion: numpy.ndarray = field(compare=False)
    dme_confusion: numpy.ndarray = field(compare=False)
    n: int = 0


@dataclass(frozen=True)
class PipelineConfig:
    thresholds: SizeThresholds = SizeThresholds()
    feature_mode: FeatureMode = FeatureMode.EXTENDED
    train: TrainConfig = TrainConfig()
    test_fraction: float = 0.2
    workers: int = 1

    @classmethod
    def from_settings(cls, settings):
        config = cls()
        return config.merged(settings)

    def merged(self, overrides):
        '''Return a copy with the values of a settings-like dict applied.'''
        config = self
        overrides = overrides or {}
        if overrides.get('thresholds') is not None:
            thresholds = overrides['thresholds']
            if isinstance(thresholds, str):
                thresholds = SizeThresholds.parse(thresholds)
            elif isinstance(thresholds, dict):
                values = config.thresholds.as_dict()
                values.update(thresholds)
                thresholds = SizeThresholds(**values)
            else:
                thresholds = SizeThresholds(*thresholds)
            config = replace(config, thresholds=thresholds)
        if overrides.get('feature_mode') is not None:
            config = replace(config, feature_mode=FeatureMode.get(
                overrides['feature_mode']))
        if overrides.get('train'):
            values = config.train.as_dict()
            values.update(overrides['train'])
            config = replace(config, train=TrainConfig.from_dict(values))
        if overrides.get('test_fraction') is not None:
            test_fraction = float(overrides['test_fraction'])
            if not 0 < test_fraction < 1:
                raise InputError('test_fraction must be in (0, 1)')
            config = replace(config, test_fraction=test_fraction)
        if overrides.get('workers') is not None:
            config = replace(config, workers=max(1, int(overrides['workers'])))
        return config
