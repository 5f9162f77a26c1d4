# -*- coding: utf-8 -*-
'''Human-readable symbolic feature vectors.

The simple vector counts the regions of each lesion class. The extended
vector splits every count into small, medium and large regions; regions
of size <= tau0 (specks) or > tau3 (artifacts) are left out of it.
'''

from .exceptions import InputError
from .models import (
    LESION_CLASSES,
    FeatureMode,
    FeatureVector,
    SizeBuckets,
    SizeThresholds,
    )
from .regions import count_regions


def bucket_regions(region_set, thresholds=SizeThresholds()):
    tau0, tau1, tau2, tau3 = thresholds.as_tuple()
    small, medium, large, discarded = [], [], [], []
    for region in region_set.regions:
        size = region.size
        if tau0 < size <= tau1:
            small.append(region)
        elif tau1 < size <= tau2:
            medium.append(region)
        elif tau2 < size <= tau3:
            large.append(region)
        else:
            discarded.append(region)
    return SizeBuckets(tuple(small), tuple(medium), tuple(large),
                       tuple(discarded))


def _by_class(region_sets):
    '''Index region sets by lesion class, one set per class required.'''
    if isinstance(region_sets, dict):
        region_sets = list(region_sets.values())
    indexed = {}
    for region_set in region_sets:
        if region_set.lesion_class in indexed:
            raise InputError('Duplicated region set for {}'
                             .format(region_set.lesion_class.name))
        indexed[region_set.lesion_class] = region_set
    missing = [c.name for c in LESION_CLASSES if c not in indexed]
    if missing:
        raise InputError('Missing region set(s) for {}'
                         .format(', '.join(missing)))
    return indexed


def simple_features(region_sets):
    indexed = _by_class(region_sets)
    return FeatureVector(FeatureMode.SIMPLE,
                         [count_regions(indexed[c]) for c in LESION_CLASSES])


def extended_features(region_sets, thresholds=SizeThresholds()):
    indexed = _by_class(region_sets)
    values = []
    for lesion_class in LESION_CLASSES:
        values.extend(bucket_regions(indexed[lesion_class],
                                     thresholds).counts())
    return FeatureVector(FeatureMode.EXTENDED, values)


def features(region_sets, mode, thresholds=SizeThresholds()):
    if FeatureMode.get(mode) is FeatureMode.SIMPLE:
        return simple_features(region_sets)
    return extended_features(region_sets, thresholds)
