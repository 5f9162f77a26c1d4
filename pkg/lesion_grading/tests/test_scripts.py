# -*- coding: utf-8 -*-
import io
import json
import os

from mock import patch

from ..grader import load_model
from ..processing import (
    read_features,
    read_predictions,
    )
from ..scripts.grading import (
    EXIT_BAD_INPUT,
    EXIT_INTERNAL,
    EXIT_OK,
    main,
    )
from ..synth import read_ground_truth
from .common import TempDirTestCase

SEVERE_SENTENCE = (
    'The image 1 is classified as severe NPDR because 37 small MAs, '
    '26 small HEs, 2 medium HEs, 2 large HEs, 197 small EXs, 5 medium EXs '
    'and 3 large EXs are detected.')
FEATURES_HEADER = ('image_id,f1,f2,f3,f4,f5,f6,f7,f8,f9,f10,f11,f12,'
                   'dr_grade,dme_grade\n')


def run(*args):
    '''Run the command line, return (exit code, stdout).'''
    with patch('sys.stdout', new_callable=io.StringIO) as stdout:
        code = main(['lesion_grading'] + [str(a) for a in args])
    return code, stdout.getvalue()


class ScriptTestCase(TempDirTestCase):

    def path(self, *parts):
        return os.path.join(self.tmpdir, *parts)

    def write(self, name, text):
        with open(self.path(name), 'w') as f:
            f.write(text)
        return self.path(name)

    def synth(self, n_images=30, name='synth', seed=42):
        code, _ = run('synth', '--out-dir', self.path(name),
                      '--n-images', n_images, '--width', 256,
                      '--height', 256, '--seed', seed)
        self.assertEqual(code, EXIT_OK)
        return self.path(name, 'manifest.csv')

    def pipeline(self, prefix):
        manifest = self.synth(name=prefix + 'synth')
        features = self.path(prefix + 'features.csv')
        model = self.path(prefix + 'model.json')
        predictions = self.path(prefix + 'predictions.csv')
        self.assertEqual(run('extract', '--manifest', manifest,
                             '--out', features)[0], EXIT_OK)
        self.assertEqual(run('train', '--features', features,
                             '--out-model', model, '--max-epochs', 3)[0],
                         EXIT_OK)
        self.assertEqual(run('predict', '--features', features,
                             '--model', model, '--out', predictions)[0],
                         EXIT_OK)
        return features, model, predictions


class TestPipeline(ScriptTestCase):

    def test_full_pipeline(self):
        features, model, predictions = self.pipeline('')
        rows = read_features(features)
        truth = read_ground_truth(self.path('synth', 'ground_truth.csv'))
        self.assertEqual(len(rows), 30)
        for row in rows:
            self.assertEqual(row.features.values, truth[row.image_id][0])
        self.assertEqual(len(read_predictions(predictions)), 30)
        self.assertLessEqual(load_model(model).metadata['epochs_run'], 3)

        code, out = run('evaluate', '--truth', features, '--predictions',
                        predictions, '--out', self.path('report.csv'))
        self.assertEqual(code, EXIT_OK)
        self.assertIn('joint accuracy:', out)
        with open(self.path('report.csv')) as f:
            self.assertEqual(f.readline().strip(),
                             'arm,n,joint_accuracy,dr_accuracy,dme_accuracy')

        code, out = run('explain', '--features', features, '--model', model,
                        '--out', self.path('explanations.txt'), '--dme')
        self.assertEqual(code, EXIT_OK)
        with open(self.path('explanations.txt')) as f:
            lines = f.read().splitlines()
        self.assertEqual(len(lines), 60)
        self.assertTrue(lines[0].startswith('The image synth_0000 is '
                                            'classified as '))
        self.assertTrue(lines[1].startswith('The DME grade of "synth_0000"'))

    def test_deterministic(self):
        '''Two runs with one seed write identical models and predictions'''
        outputs = [self.pipeline(prefix) for prefix in ('a_', 'b_')]
        for first, second in zip(*outputs):
            with open(first, 'rb') as f, open(second, 'rb') as g:
                self.assertEqual(f.read(), g.read())

    def test_simple_mode(self):
        manifest = self.synth(n_images=5)
        features = self.path('simple.csv')
        self.assertEqual(run('extract', '--manifest', manifest, '--mode',
                             'simple', '--workers', 2, '--out', features)[0],
                         EXIT_OK)
        with open(features) as f:
            self.assertEqual(f.readline().strip(),
                             'image_id,f1,f2,f3,f4,dr_grade,dme_grade')

    def test_ablation(self):
        manifest = self.synth(n_images=20)
        code, out = run('ablation', '--manifest', manifest, '--max-epochs', 2,
                        '--hidden-dims', '8,8', '--out', self.path('abl.csv'))
        self.assertEqual(code, EXIT_OK)
        self.assertIn('simple', out)
        self.assertIn('extended', out)
        with open(self.path('abl.csv')) as f:
            lines = f.read().splitlines()
        self.assertEqual(len(lines), 3)
        self.assertTrue(lines[1].startswith('simple,4,'))
        self.assertTrue(lines[2].startswith('extended,4,'))


class TestExplain(ScriptTestCase):

    def setUp(self):
        super(TestExplain, self).setUp()
        self.features = self.write(
            'features.csv', FEATURES_HEADER +
            '1,37,0,0,26,2,2,0,0,0,197,5,3,,\n')

    def test_with_predictions(self):
        predictions = self.write('pred.csv',
                                 'image_id,dr_pred,dme_pred\n1,3,2\n')
        code, out = run('explain', '--features', self.features,
                        '--predictions', predictions, '--totals')
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(out.splitlines(), [
            SEVERE_SENTENCE,
            'In total: 37 MA, 30 HE, 0 SE and 205 EX regions.'])

    def test_with_model(self):
        '''A model always predicting severe NPDR explains the fixture'''
        model = {
            'format_version': 1,
            'feature_mode': 'extended',
            'thresholds': {'tau0': 10, 'tau1': 500, 'tau2': 1000,
                           'tau3': 10000},
            'trunk_dims': [12],
            'layers': [],
            'dr_head': {'weights': [[0] * 5] * 12,
                        'biases': [0, 0, 0, 1, 0]},
            'dme_head': {'weights': [[0] * 3] * 12, 'biases': [0, 0, 1]},
            'preprocess': {'shift': [0] * 12, 'scale': [1] * 12},
            }
        path = self.write('model.json', json.dumps(model))
        code, out = run('explain', '--features', self.features,
                        '--model', path)
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(out, SEVERE_SENTENCE + '\n')

    def test_needs_grades(self):
        self.assertEqual(run('explain', '--features', self.features)[0],
                         EXIT_BAD_INPUT)

    def test_missing_prediction(self):
        predictions = self.write('pred.csv',
                                 'image_id,dr_pred,dme_pred\n2,3,2\n')
        self.assertEqual(run('explain', '--features', self.features,
                             '--predictions', predictions)[0],
                         EXIT_BAD_INPUT)


class TestErrors(ScriptTestCase):

    def test_missing_mask(self):
        '''A missing mask names its path and exits with bad input'''
        manifest = self.synth(n_images=3)
        missing = self.path('synth', 'masks', 'synth_0001_HE.pgm')
        os.remove(missing)
        with self.assertLogs('lesion_grading', 'ERROR') as logs:
            code, _ = run('extract', '--manifest', manifest,
                          '--out', self.path('features.csv'))
        self.assertEqual(code, EXIT_BAD_INPUT)
        self.assertTrue(any(missing in line for line in logs.output))
        self.assertFalse(os.path.exists(self.path('features.csv')))

    def test_empty_manifest(self):
        manifest = self.write('manifest.csv',
                              'image_id,ma_mask,he_mask,se_mask,ex_mask,'
                              'dr_grade,dme_grade\n')
        code, _ = run('extract', '--manifest', manifest,
                      '--out', self.path('features.csv'))
        self.assertEqual(code, EXIT_OK)
        with open(self.path('features.csv')) as f:
            self.assertEqual(f.read(), FEATURES_HEADER)

    def test_unlabeled_training(self):
        features = self.write('features.csv', FEATURES_HEADER +
                              'a,' + '1,' * 12 + ',\n' +
                              'b,' + '2,' * 12 + '1,0\n')
        with self.assertLogs('lesion_grading', 'ERROR') as logs:
            code, _ = run('train', '--features', features,
                          '--out-model', self.path('model.json'))
        self.assertEqual(code, EXIT_BAD_INPUT)
        self.assertIn('labels required', '\n'.join(logs.output))
        self.assertFalse(os.path.exists(self.path('model.json')))

    def test_mismatched_rows(self):
        features = self.write('features.csv', FEATURES_HEADER +
                              'a,' + '1,' * 12 + '1,0\n' +
                              'b,' + '2,' * 12 + '1,0\n')
        predictions = self.write('pred.csv',
                                 'image_id,dr_pred,dme_pred\na,1,0\n')
        code, _ = run('evaluate', '--truth', features, '--predictions',
                      predictions)
        self.assertEqual(code, EXIT_BAD_INPUT)

    def test_bad_thresholds(self):
        manifest = self.synth(n_images=1)
        code, _ = run('extract', '--manifest', manifest, '--thresholds',
                      '10,5,1000,10000', '--out', self.path('f.csv'))
        self.assertEqual(code, EXIT_BAD_INPUT)

    def test_missing_file(self):
        code, _ = run('predict', '--features', self.path('absent.csv'),
                      '--model', self.path('absent.json'),
                      '--out', self.path('p.csv'))
        self.assertEqual(code, EXIT_BAD_INPUT)

    @patch('lesion_grading.scripts.grading.save_model')
    def test_internal_error(self, save_mock):
        '''A failing stage leaves no partial output behind'''
        def partial(model, path):
            with open(path, 'w') as f:
                f.write('{')
            raise RuntimeError('disk full')
        save_mock.side_effect = partial
        features = self.write('features.csv', FEATURES_HEADER +
                              'a,' + '1,' * 12 + '1,0\n' +
                              'b,' + '2,' * 12 + '2,1\n')
        with self.assertLogs('lesion_grading', 'ERROR'):
            code, _ = run('train', '--features', features, '--max-epochs', 1,
                          '--out-model', self.path('model.json'))
        self.assertEqual(code, EXIT_INTERNAL)
        self.assertEqual(sorted(os.listdir(self.tmpdir)), ['features.csv'])


class TestConfiguration(ScriptTestCase):

    def features(self):
        return self.write('features.csv', FEATURES_HEADER + ''.join(
            '{},{}{},{}\n'.format(k, '{},'.format(k % 4) * 12, k % 5, k % 3)
            for k in range(12)))

    def test_flags_override_config_file(self):
        config = self.write('config.yaml', 'train:\n  max_epochs: 2\n'
                                           '  seed: 5\n'
                                           '  hidden_dims: [6]\n')
        code, _ = run('train', '--features', self.features(), '--config',
                      config, '--seed', 9, '--out-model',
                      self.path('model.json'))
        self.assertEqual(code, EXIT_OK)
        metadata = load_model(self.path('model.json')).metadata
        self.assertEqual(metadata['config']['seed'], 9)
        self.assertEqual(metadata['config']['max_epochs'], 2)
        self.assertEqual(metadata['config']['hidden_dims'], [6])

    def test_json_config_and_patience(self):
        config = self.write('config.json',
                            json.dumps({'train': {'max_epochs': 4,
                                                  'hidden_dims': [5]}}))
        code, _ = run('train', '--features', self.features(), '--config',
                      config, '--patience', 0, '--out-model',
                      self.path('model.json'))
        self.assertEqual(code, EXIT_OK)
        metadata = load_model(self.path('model.json')).metadata
        self.assertIsNone(metadata['config']['patience'])
        self.assertEqual(metadata['epochs_run'], 4)

    def test_unknown_setting(self):
        config = self.write('config.yaml', 'train:\n  momentum: 0.9\n')
        code, _ = run('train', '--features', self.features(), '--config',
                      config, '--out-model', self.path('model.json'))
        self.assertEqual(code, EXIT_BAD_INPUT)

    def test_help_shows_defaults(self):
        for command, expected in (('extract', '10,500,1000,10000'),
                                  ('train', '0.01'),
                                  ('train', '25,50,75,100,75,50,25,12'),
                                  ('synth', 'size_aware'),
                                  ('ablation', '0.2')):
            with patch('sys.stdout', new_callable=io.StringIO) as stdout:
                with self.assertRaises(SystemExit) as context:
                    main(['lesion_grading', command, '--help'])
            self.assertEqual(context.exception.code, 0)
            self.assertIn(expected, stdout.getvalue())
