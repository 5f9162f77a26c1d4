# -*- coding: utf-8 -*-
'''Connected lesion regions of a mask.

Regions are 8-connected sets of foreground pixels. Labeling is the classic
two pass scheme on horizontal runs of foreground pixels: the first pass
unites runs of adjacent rows that touch, the second pass collects the runs
of every root into a region.
'''

import numpy

from .models import (
    Region,
    RegionSet,
    )


class DisjointSet(object):
    '''Union-find with path compression and union by rank.'''

    def __init__(self, size=0):
        self.parent = list(range(size))
        self.rank = [0] * size

    def make_set(self):
        self.parent.append(len(self.parent))
        self.rank.append(0)
        return len(self.parent) - 1

    def find(self, x):
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, x, y):
        x_root = self.find(x)
        y_root = self.find(y)
        if x_root == y_root:
            return x_root
        if self.rank[x_root] < self.rank[y_root]:
            x_root, y_root = y_root, x_root
        self.parent[y_root] = x_root
        if self.rank[x_root] == self.rank[y_root]:
            self.rank[x_root] += 1
        return x_root


def foreground_runs(pixels):
    '''Return (rows, starts, ends) of the horizontal foreground runs in
    raster order, ends exclusive.'''
    height, width = pixels.shape
    padded = numpy.zeros((height, width + 2), dtype=numpy.int8)
    padded[:, 1:-1] = pixels
    edges = numpy.diff(padded, axis=1)
    rows, starts = numpy.nonzero(edges == 1)
    ends = numpy.nonzero(edges == -1)[1]
    return rows, starts, ends


def extract_regions(mask, row_order=None):
    '''Return the RegionSet of a mask.

    row_order optionally gives the order in which pairs of adjacent rows
    are united (row r is united with row r - 1); the result never depends
    on it.
    '''
    height = mask.height
    rows, starts, ends = foreground_runs(mask.pixels)
    bounds = numpy.searchsorted(rows, numpy.arange(height + 1)).tolist()
    rows, starts, ends = rows.tolist(), starts.tolist(), ends.tolist()

    runs = DisjointSet(len(starts))
    if row_order is None:
        row_order = range(1, height)
    for row in row_order:
        if row < 1:
            continue
        above, above_end = bounds[row - 1], bounds[row]
        below, below_end = bounds[row], bounds[row + 1]
        while above < above_end and below < below_end:
            # runs touch when their column ranges overlap or are diagonal
            if starts[above] <= ends[below] and starts[below] <= ends[above]:
                runs.union(above, below)
            if ends[above] < ends[below]:
                above += 1
            else:
                below += 1

    # second pass, runs in raster order: the first run seen for a root
    # holds the region's seed pixel
    collected = {}
    for index, (row, start, end) in enumerate(zip(rows, starts, ends)):
        root = runs.find(index)
        entry = collected.get(root)
        if entry is None:
            collected[root] = [end - start, row, start, row, end - 1,
                               (row, start)]
        else:
            entry[0] += end - start
            entry[2] = min(entry[2], start)
            entry[3] = row
            entry[4] = max(entry[4], end - 1)

    regions = [Region(size, (min_row, min_col, max_row, max_col), seed)
               for size, min_row, min_col, max_row, max_col, seed
               in collected.values()]
    regions.sort(key=lambda region: region.seed_pixel)
    return RegionSet(mask.lesion_class, tuple(regions))


def count_regions(region_set):
    return len(region_set.regions)
