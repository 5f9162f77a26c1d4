import shutil
import tempfile
import unittest

import numpy

from ..models import (
    LESION_CLASSES,
    LesionClass,
    LesionMask,
    Region,
    RegionSet,
    )
from ..synth import SynthSpec


def flood_fill_regions(pixels):
    '''Reference labeling: (seed_pixel, size) of every 8-connected region,
    in raster order of the seeds.'''
    height, width = pixels.shape
    seen = numpy.zeros_like(pixels, dtype=bool)
    regions = []
    for row in range(height):
        for col in range(width):
            if not pixels[row, col] or seen[row, col]:
                continue
            seen[row, col] = True
            stack = [(row, col)]
            size = 0
            while stack:
                r, c = stack.pop()
                size += 1
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        nr, nc = r + dr, c + dc
                        if 0 <= nr < height and 0 <= nc < width and \
                                pixels[nr, nc] and not seen[nr, nc]:
                            seen[nr, nc] = True
                            stack.append((nr, nc))
            regions.append(((row, col), size))
    return regions


def flood_fill_size(pixels, seed):
    '''Size of the 8-connected region holding seed.'''
    height, width = pixels.shape
    seen = {seed}
    stack = [seed]
    while stack:
        r, c = stack.pop()
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                n = (r + dr, c + dc)
                if 0 <= n[0] < height and 0 <= n[1] < width and \
                        pixels[n] and n not in seen:
                    seen.add(n)
                    stack.append(n)
    return len(seen)


def random_mask(rng, height, width, density, lesion_class=LesionClass.MA):
    return LesionMask(lesion_class, rng.random((height, width)) < density)


def region_set(lesion_class, sizes):
    '''RegionSet of regions with the given sizes, one row per region.'''
    return RegionSet(lesion_class, tuple(
        Region(size, (row, 0, row, size - 1), (row, 0))
        for row, size in enumerate(sizes)))


def empty_region_sets():
    return dict((c, RegionSet(c)) for c in LESION_CLASSES)


def small_spec(n_images=10, seed=7, **kwargs):
    '''A synthetic dataset spec small enough for a 128x128 canvas.'''
    values = dict(
        n_images=n_images, width=128, height=128, seed=seed,
        count_ranges={
            'MA': {'small': [(1, 6)], 'medium': [(0, 0)],
                   'large': [(0, 0)]},
            'HE': {'small': [(1, 8), (21, 26)], 'medium': [(0, 1)],
                   'large': [(0, 1), (3, 3)]},
            'SE': {'small': [(1, 3)], 'medium': [(0, 0)],
                   'large': [(0, 0)]},
            'EX': {'small': [(1, 6)], 'medium': [(0, 1)],
                   'large': [(0, 1)]},
            },
        size_ranges={'small': (11, 40), 'medium': (501, 700),
                     'large': (1001, 1200)},
        noise_count=(0, 4))
    values.update(kwargs)
    return SynthSpec(**values)


class TempDirTestCase(unittest.TestCase):

    def setUp(self):
        self.tmpdir = tempfile.mkdtemp(prefix='lesion_grading_')

    def tearDown(self):
        shutil.rmtree(self.tmpdir, ignore_errors=True)
