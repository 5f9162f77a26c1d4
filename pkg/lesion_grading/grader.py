# -*- coding: utf-8 -*-
'''Fully connected grader mapping symbolic feature vectors to grades.

The network is a ReLU trunk (input width, hidden widths...) followed by two
affine softmax heads, 5 DR classes and 3 DME classes. Inputs are
preprocessed as (log1p(count) - shift) / scale with statistics of the
training split stored in the model. The loss of a sample is the sum of the
cross-entropies of both heads.
'''

import json
import logging
import math
from collections import namedtuple

import numpy

from .exceptions import (
    InputError,
    ModeMismatchError,
    ModelFormatError,
    ProcessException,
    ShapeError,
    )
from .models import (
    FeatureMode,
    GradePair,
    SizeThresholds,
    TrainConfig,
    )

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

DR_CLASSES = 5
DME_CLASSES = 3

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

PROBABILITY_FLOOR = 1e-12


ForwardCache = namedtuple('ForwardCache', [
    'inputs',          # preprocessed batch, (n, trunk_dims[0])
    'preactivations',  # one (n, width) array per trunk layer
    'activations',     # after ReLU and dropout
    'masks',           # dropout masks (scaled) or None
    'dr_logits',
    'dme_logits',
    'dr_probs',
    'dme_probs',
    ])


def relu(x):
    return numpy.maximum(x, 0.0)


def softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exps = numpy.exp(shifted)
    return exps / exps.sum(axis=-1, keepdims=True)


class GraderModel(object):

    def __init__(self, feature_mode, thresholds, trunk_dims, weights, biases,
                 dr_head, dme_head, shift, scale, seed=0, dropout_prob=0.0,
                 metadata=None):
        self.feature_mode = FeatureMode.get(feature_mode)
        self.thresholds = thresholds
        self.trunk_dims = [int(d) for d in trunk_dims]
        self.weights = [numpy.asarray(w, dtype=float) for w in weights]
        self.biases = [numpy.asarray(b, dtype=float) for b in biases]
        self.dr_head = tuple(numpy.asarray(a, dtype=float) for a in dr_head)
        self.dme_head = tuple(numpy.asarray(a, dtype=float) for a in dme_head)
        self.shift = numpy.asarray(shift, dtype=float)
        self.scale = numpy.asarray(scale, dtype=float)
        self.seed = seed
        self.dropout_prob = dropout_prob
        self.metadata = metadata or {}
        self.check()

    def check(self):
        dims = self.trunk_dims
        if not dims:
            raise ShapeError('trunk_dims is empty')
        if dims[0] != self.feature_mode.length:
            raise ShapeError('trunk input width {} does not match the {} '
                             'feature length {}'
                             .format(dims[0], self.feature_mode.value,
                                     self.feature_mode.length))
        if len(self.weights) != len(dims) - 1 or \
                len(self.biases) != len(dims) - 1:
            raise ShapeError('trunk_dims describe {} layers, got {} weight '
                             'matrices and {} bias vectors'
                             .format(len(dims) - 1, len(self.weights),
                                     len(self.biases)))
        for layer, (w, b) in enumerate(zip(self.weights, self.biases),
                                       start=1):
            _check_affine('trunk layer {}'.format(layer), w, b,
                          dims[layer - 1], dims[layer])
        _check_affine('DR head', self.dr_head[0], self.dr_head[1],
                      dims[-1], DR_CLASSES)
        _check_affine('DME head', self.dme_head[0], self.dme_head[1],
                      dims[-1], DME_CLASSES)
        for name, stats in (('shift', self.shift), ('scale', self.scale)):
            if stats.shape != (dims[0],):
                raise ShapeError('preprocess {} has shape {}, expected ({},)'
                                 .format(name, stats.shape, dims[0]))
        if not numpy.all(self.scale > 0):
            raise ShapeError('preprocess scales must be strictly positive')

    @classmethod
    def initialize(cls, feature_mode, hidden_dims, rng,
                   thresholds=SizeThresholds(), shift=None, scale=None,
                   seed=0, dropout_prob=0.0):
        '''Uniform weights in +-sqrt(6 / fan_in), zero biases.'''
        feature_mode = FeatureMode.get(feature_mode)
        dims = [feature_mode.length] + list(hidden_dims)

        def layer(fan_in, fan_out):
            limit = math.sqrt(6.0 / fan_in)
            return (rng.uniform(-limit, limit, size=(fan_in, fan_out)),
                    numpy.zeros(fan_out))

        trunk = [layer(a, b) for a, b in zip(dims, dims[1:])]
        dr_head = layer(dims[-1], DR_CLASSES)
        dme_head = layer(dims[-1], DME_CLASSES)
        if shift is None:
            shift = numpy.zeros(dims[0])
        if scale is None:
            scale = numpy.ones(dims[0])
        return cls(feature_mode, thresholds, dims,
                   [w for w, _ in trunk], [b for _, b in trunk],
                   dr_head, dme_head, shift, scale,
                   seed=seed, dropout_prob=dropout_prob)

    def parameters(self):
        '''Parameter arrays in a fixed order, updated in place by training.'''
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        params.extend(self.dr_head)
        params.extend(self.dme_head)
        return params

    def set_parameters(self, values):
        for param, value in zip(self.parameters(), values):
            param[...] = value

    def preprocess_batch(self, raw):
        return (numpy.log1p(numpy.asarray(raw, dtype=float)) - self.shift) \
            / self.scale

    def dropout_masks(self, batch_size, dropout_prob, rng):
        '''Inverted dropout masks, one per trunk layer, or None.'''
        if dropout_prob <= 0:
            return None
        keep = 1.0 - dropout_prob
        return [(rng.random((batch_size, width)) >= dropout_prob) / keep
                for width in self.trunk_dims[1:]]

    def forward_batch(self, inputs, masks=None):
        hidden = inputs
        preactivations = []
        activations = []
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = hidden @ w + b
            hidden = relu(z)
            if masks is not None:
                hidden = hidden * masks[layer]
            preactivations.append(z)
            activations.append(hidden)
        dr_logits = hidden @ self.dr_head[0] + self.dr_head[1]
        dme_logits = hidden @ self.dme_head[0] + self.dme_head[1]
        return ForwardCache(inputs, preactivations, activations, masks,
                            dr_logits, dme_logits,
                            softmax(dr_logits), softmax(dme_logits))

    def backward(self, cache, dr_labels, dme_labels):
        '''Return (mean loss, gradients) of a batch, gradients in the order
        of parameters().'''
        n = cache.inputs.shape[0]
        rows = numpy.arange(n)
        loss = batch_loss(cache.dr_probs, cache.dme_probs,
                          dr_labels, dme_labels)

        d_dr = cache.dr_probs.copy()
        d_dr[rows, dr_labels] -= 1.0
        d_dr /= n
        d_dme = cache.dme_probs.copy()
        d_dme[rows, dme_labels] -= 1.0
        d_dme /= n

        last = cache.activations[-1] if cache.activations else cache.inputs
        head_grads = [last.T @ d_dr, d_dr.sum(axis=0),
                      last.T @ d_dme, d_dme.sum(axis=0)]
        d_hidden = d_dr @ self.dr_head[0].T + d_dme @ self.dme_head[0].T

        trunk_grads = []
        for layer in reversed(range(len(self.weights))):
            if cache.masks is not None:
                d_hidden = d_hidden * cache.masks[layer]
            d_z = d_hidden * (cache.preactivations[layer] > 0)
            previous = cache.activations[layer - 1] if layer > 0 \
                else cache.inputs
            trunk_grads.append((previous.T @ d_z, d_z.sum(axis=0)))
            d_hidden = d_z @ self.weights[layer].T

        grads = []
        for gw, gb in reversed(trunk_grads):
            grads.extend((gw, gb))
        grads.extend(head_grads)
        return loss, grads

    def mean_loss(self, inputs, dr_labels, dme_labels):
        cache = self.forward_batch(inputs)
        return batch_loss(cache.dr_probs, cache.dme_probs,
                          dr_labels, dme_labels)


def _check_affine(name, w, b, fan_in, fan_out):
    if w.shape != (fan_in, fan_out):
        raise ShapeError('{}: weight shape {} does not match ({}, {})'
                         .format(name, w.shape, fan_in, fan_out))
    if b.shape != (fan_out,):
        raise ShapeError('{}: bias shape {} does not match ({},)'
                         .format(name, b.shape, fan_out))


def batch_loss(dr_probs, dme_probs, dr_labels, dme_labels):
    rows = numpy.arange(dr_probs.shape[0])
    dr = numpy.log(numpy.maximum(dr_probs[rows, dr_labels],
                                 PROBABILITY_FLOOR))
    dme = numpy.log(numpy.maximum(dme_probs[rows, dme_labels],
                                  PROBABILITY_FLOOR))
    return float(-(dr + dme).mean())


def loss(dr_probs, dme_probs, label):
    '''Summed cross-entropy of both heads for one sample.'''
    return (-math.log(max(float(dr_probs[label.dr]), PROBABILITY_FLOOR)) -
            math.log(max(float(dme_probs[label.dme]), PROBABILITY_FLOOR)))


def _check_mode(features, model):
    if features.mode is not model.feature_mode:
        raise ModeMismatchError(
            '{} features given to a model trained on {} features'
            .format(features.mode.value, model.feature_mode.value))


def preprocess(features, model):
    _check_mode(features, model)
    return model.preprocess_batch(features.values)


def preprocessing_stats(raw):
    '''Mean and standard deviation of log1p(raw) per feature; constant
    features get scale 1.'''
    logged = numpy.log1p(numpy.asarray(raw, dtype=float))
    shift = logged.mean(axis=0)
    scale = logged.std(axis=0)
    scale[scale < 1e-12] = 1.0
    return shift, scale


def forward(model, features, training_mode=False, rng=None):
    inputs = preprocess(features, model)[numpy.newaxis, :]
    masks = None
    if training_mode and model.dropout_prob > 0:
        if rng is None:
            raise InputError('A random generator is required for dropout')
        masks = model.dropout_masks(1, model.dropout_prob, rng)
    cache = model.forward_batch(inputs, masks)
    return cache.dr_probs[0], cache.dme_probs[0]


def predict(model, features):
    dr_probs, dme_probs = forward(model, features)
    # argmax keeps the first maximum, ties go to the lower grade
    return GradePair(int(numpy.argmax(dr_probs)), int(numpy.argmax(dme_probs)))


def predict_batch(model, feature_vectors):
    if not feature_vectors:
        return []
    for features in feature_vectors:
        _check_mode(features, model)
    inputs = model.preprocess_batch([f.values for f in feature_vectors])
    cache = model.forward_batch(inputs)
    return [GradePair(int(dr), int(dme)) for dr, dme in
            zip(cache.dr_probs.argmax(axis=1), cache.dme_probs.argmax(axis=1))]


class Adam(object):

    def __init__(self, parameters, learning_rate, beta1=ADAM_BETA1,
                 beta2=ADAM_BETA2, epsilon=ADAM_EPSILON):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.moments = [numpy.zeros_like(p) for p in parameters]
        self.velocities = [numpy.zeros_like(p) for p in parameters]
        self.steps = 0

    def step(self, parameters, gradients):
        self.steps += 1
        correction1 = 1.0 - self.beta1 ** self.steps
        correction2 = 1.0 - self.beta2 ** self.steps
        for param, grad, m, v in zip(parameters, gradients, self.moments,
                                     self.velocities):
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            param -= self.learning_rate * (m / correction1) / \
                (numpy.sqrt(v / correction2) + self.epsilon)


def split_indices(n, fraction, rng):
    '''Shuffle range(n) and cut off round(n * fraction) indices, keeping
    both parts nonempty. Returns (held_out, rest).'''
    order = rng.permutation(n)
    held_out = int(round(n * fraction))
    held_out = min(max(held_out, 1), n - 1)
    return order[:held_out], order[held_out:]


def train(dataset, config=TrainConfig(), thresholds=SizeThresholds()):
    '''Train a grader on (FeatureVector, GradePair) pairs.

    Every random draw (split, initial weights, batch order, dropout) comes
    from one generator seeded with config.seed. The returned model holds the
    weights of the epoch with the lowest validation loss.
    '''
    if len(dataset) < 2:
        raise InputError('Training needs at least 2 labeled samples, got {}'
                         .format(len(dataset)))
    modes = set(features.mode for features, _ in dataset)
    if len(modes) > 1:
        raise ModeMismatchError('Training samples mix simple and extended '
                                'feature vectors')
    mode = modes.pop()

    raw = numpy.array([features.values for features, _ in dataset],
                      dtype=float)
    dr = numpy.array([label.dr for _, label in dataset])
    dme = numpy.array([label.dme for _, label in dataset])

    rng = numpy.random.default_rng(config.seed)
    validation, training = split_indices(len(dataset),
                                         config.validation_fraction, rng)
    shift, scale = preprocessing_stats(raw[training])
    model = GraderModel.initialize(mode, config.hidden_dims, rng,
                                   thresholds=thresholds, shift=shift,
                                   scale=scale, seed=config.seed,
                                   dropout_prob=config.dropout_prob)
    inputs = model.preprocess_batch(raw)
    optimizer = Adam(model.parameters(), config.learning_rate)

    logger.info('Training %s grader on %d samples (%d validation)',
                mode.value, len(training), len(validation))
    best_loss = math.inf
    best_params = None
    best_epoch = 0
    history = []
    waiting = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(training)
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            masks = model.dropout_masks(len(batch), config.dropout_prob, rng)
            cache = model.forward_batch(inputs[batch], masks)
            _, grads = model.backward(cache, dr[batch], dme[batch])
            optimizer.step(model.parameters(), grads)

        validation_loss = model.mean_loss(inputs[validation], dr[validation],
                                          dme[validation])
        history.append(validation_loss)
        logger.debug('epoch %d: validation loss %.6f', epoch, validation_loss)
        if validation_loss < best_loss:
            best_loss = validation_loss
            best_params = [p.copy() for p in model.parameters()]
            best_epoch = epoch
            waiting = 0
        elif config.patience is not None:
            waiting += 1
            if waiting >= config.patience:
                logger.info('Early stopping after epoch %d', epoch)
                break

    if best_params is None:
        raise ProcessException('Training diverged, the validation loss was '
                               'never finite')
    model.set_parameters(best_params)
    logger.info('Best validation loss %.6f at epoch %d', best_loss,
                best_epoch)

    train_config = config.as_dict()
    train_config['hidden_dims'] = list(config.hidden_dims)
    model.metadata = {
        'config': train_config,
        'train_size': int(len(training)),
        'validation_size': int(len(validation)),
        'epochs_run': len(history),
        'best_epoch': best_epoch,
        'best_validation_loss': best_loss,
        'validation_history': history,
        }
    return model


def model_to_dict(model):
    return {
        'format_version': FORMAT_VERSION,
        'feature_mode': model.feature_mode.value,
        'thresholds': model.thresholds.as_dict(),
        'trunk_dims': list(model.trunk_dims),
        'layers': [{'weights': w.tolist(), 'biases': b.tolist()}
                   for w, b in zip(model.weights, model.biases)],
        'dr_head': {'weights': model.dr_head[0].tolist(),
                    'biases': model.dr_head[1].tolist()},
        'dme_head': {'weights': model.dme_head[0].tolist(),
                     'biases': model.dme_head[1].tolist()},
        'preprocess': {'shift': model.shift.tolist(),
                       'scale': model.scale.tolist()},
        'seed': model.seed,
        'dropout_prob': model.dropout_prob,
        'training': model.metadata,
        }


def model_from_dict(document):
    if not isinstance(document, dict):
        raise ModelFormatError('Model document must be a JSON object')
    version = document.get('format_version')
    if version != FORMAT_VERSION:
        raise ModelFormatError('Unknown model format_version {!r}'
                               .format(version))
    try:
        layers = document['layers']
        trunk = [(_array(layer['weights'], 'trunk layer {}'.format(i)),
                  _array(layer['biases'], 'trunk layer {}'.format(i)))
                 for i, layer in enumerate(layers, start=1)]
        heads = {}
        for name in ('dr_head', 'dme_head'):
            label = name.replace('_head', '').upper() + ' head'
            heads[name] = (_array(document[name]['weights'], label),
                           _array(document[name]['biases'], label))
        return GraderModel(
            feature_mode=document['feature_mode'],
            thresholds=_thresholds(document['thresholds']),
            trunk_dims=document['trunk_dims'],
            weights=[w for w, _ in trunk],
            biases=[b for _, b in trunk],
            dr_head=heads['dr_head'],
            dme_head=heads['dme_head'],
            shift=_array(document['preprocess']['shift'], 'preprocess'),
            scale=_array(document['preprocess']['scale'], 'preprocess'),
            seed=document.get('seed', 0),
            dropout_prob=document.get('dropout_prob', 0.0),
            metadata=document.get('training'))
    except (KeyError, TypeError) as e:
        raise ModelFormatError('Model document is missing field {}'
                               .format(e))


def _thresholds(values):
    if not isinstance(values, dict):
        raise ModelFormatError('Model thresholds must be a JSON object')
    expected = set(SizeThresholds().as_dict())
    unexpected = sorted(set(values) - expected)
    if unexpected:
        raise ModelFormatError('Unexpected thresholds key(s) {}'
                               .format(', '.join(unexpected)))
    missing = sorted(expected - set(values))
    if missing:
        raise ModelFormatError('Model document is missing thresholds '
                               'field(s) {}'.format(', '.join(missing)))
    return SizeThresholds(**values)


def _array(values, name):
    try:
        return numpy.array(values, dtype=float)
    except (ValueError, TypeError):
        raise ShapeError('{}: ragged or non numeric array'.format(name))


def save_model(model, path):
    with open(path, 'w') as f:
        json.dump(model_to_dict(model), f)
        f.write('\n')
    return path


def load_model(path):
    with open(path, 'r') as f:
        try:
            document = json.load(f)
        except ValueError as e:
            raise ModelFormatError('{}: not a JSON document ({})'
                                   .format(path, e))
    return model_from_dict(document)
