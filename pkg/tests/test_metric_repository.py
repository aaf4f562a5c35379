# tests/test_metric_repository.py
# Unit tests for metric specification files and the corpus manifest

import unittest
import os
import sys
import tempfile

# Add parent directory to path
parent_dir = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if parent_dir not in sys.path:
    sys.path.insert(0, parent_dir)

from business_logic.expr import ZERO, evaluate
from data_access.metric_repository import MANIFEST_COLUMNS, MetricRepository
from data_access.models import MetricSpecError

HEADER = """[chart]
dimension = 2
coordinates = x1, x2
domain.x1 = -1, 1
domain.x2 = -1, 1
[metric]
"""


class TestCorpus(unittest.TestCase):
    """Test the bundled metric corpus"""

    @classmethod
    def setUpClass(cls):
        cls.repository = MetricRepository()

    def test_every_corpus_metric_loads(self):
        names = self.repository.list_metrics()
        self.assertIn('sphere_gnomonic4', names)
        self.assertIn('polar_flat2', names)
        for name in names:
            metric = self.repository.load_metric_spec(name)
            self.assertEqual(metric.name, name)
            self.assertIn(metric.dimension, (2, 3, 4))

    def test_flat_components(self):
        metric = self.repository.load_metric_spec('flat3')
        self.assertIs(metric.components[0][1], ZERO)
        self.assertIs(metric.components[1][2], metric.components[2][1])
        self.assertEqual(evaluate(metric.components[2][2], [0.1, 0.2, 0.3]), 1.0)
        self.assertEqual(metric.chart.margin, 0.1)

    def test_symmetric_entries_share_one_expression(self):
        metric = self.repository.load_metric_spec('sphere_gnomonic2')
        self.assertIs(metric.components[0][1], metric.components[1][0])
        self.assertAlmostEqual(evaluate(metric.components[0][1], [0.3, 0.4]), -0.12 / 1.25 ** 2, places=14)

    def test_resolve_path_and_name(self):
        path = self.repository.resolve('warped2')
        self.assertTrue(path.endswith(os.path.join('corpus', 'warped2.metric')))
        self.assertEqual(self.repository.resolve(path), path)
        with self.assertRaises(MetricSpecError):
            self.repository.resolve('no_such_metric')

    def test_manifest(self):
        manifest = self.repository.load_manifest()
        self.assertEqual(list(manifest.columns), MANIFEST_COLUMNS)
        self.assertEqual(len(manifest), 23)
        self.assertTrue(set(manifest['command']) <= {'verify', 'solve', 'einstein', 'curvature', 'geodesic-compare'})
        self.assertTrue(set(manifest['expected_exit']) <= {0, 1, 2})
        negative = manifest[(manifest['command'] == 'verify') & (manifest['expected_exit'] == 1)]
        self.assertEqual(set(negative['expected_class']), {'not_geodesic'})


class TestMetricFileErrors(unittest.TestCase):
    """Test validation and error locations of metric files"""

    def setUp(self):
        self.repository = MetricRepository()

    def assertSpecError(self, text, line=None, fragment=None):
        with self.assertRaises(MetricSpecError) as ctx:
            self.repository.parse_text(text, 'test.metric')
        if line is not None:
            self.assertEqual(ctx.exception.line, line)
        if fragment is not None:
            self.assertIn(fragment, str(ctx.exception))
        return ctx.exception

    def test_minimal_file(self):
        metric = self.repository.parse_text(HEADER + 'g11 = "1"\ng22 = "1 + x1^2"\n', 'minimal.metric')
        self.assertEqual(metric.name, 'minimal')
        self.assertIsNone(metric.expected)
        self.assertEqual(evaluate(metric.components[1][1], [2.0, 0.0]), 5.0)

    def test_duplicate_symmetric_entry(self):
        self.assertSpecError(HEADER + 'g11 = "1"\ng12 = "0.1"\ng21 = "0.1"\ng22 = "1"\n', 9,
                             "duplicate symmetric entry: g21 and g12")

    def test_lower_triangle_key(self):
        self.assertSpecError(HEADER + 'g11 = "1"\ng21 = "0.1"\ng22 = "1"\n', 8, "write g12 instead of g21")

    def test_syntax_error_location(self):
        error = self.assertSpecError(HEADER + 'g11 = "x1 + + x2"\n', 7)
        self.assertEqual(error.column, 13)
        self.assertIn("test.metric:7:13", str(error))

    def test_unknown_identifier(self):
        self.assertSpecError(HEADER + 'g11 = "1 + y^2"\ng22 = "1"\n', 7, "g11")

    def test_component_outside_dimension(self):
        self.assertSpecError(HEADER + 'g11 = "1"\ng13 = "0"\n', 8, "outside dimension 2")

    def test_bad_key(self):
        self.assertSpecError(HEADER + 'h11 = "1"\n', 7, "g<i><j>")

    def test_no_diagonal(self):
        self.assertSpecError(HEADER + 'g12 = "1"\n', 6, "no diagonal")

    def test_section_errors(self):
        self.assertSpecError('g11 = "1"\n' + HEADER, 1, "outside of a section")
        self.assertSpecError(HEADER + 'g11 = "1"\n[extras]\n', 8, "unknown section")
        self.assertSpecError(HEADER + 'g11 = "1"\n[metric]\n', 8, "appears twice")
        self.assertSpecError(HEADER + 'g11 "1"\n', 7, "key = value")
        self.assertSpecError(HEADER + 'g11 = "1"\ng11 = "2"\n', 8, "duplicate entry")
        self.assertSpecError('[metric]\ng11 = "1"\n', None, "missing [chart]")

    def test_chart_validation(self):
        wrong_count = HEADER.replace('dimension = 2', 'dimension = 3')
        self.assertSpecError(wrong_count + 'g11 = "1"\n', None, "invalid [chart]")
        no_domain = HEADER.replace('domain.x2 = -1, 1\n', '')
        self.assertSpecError(no_domain + 'g11 = "1"\n', None, "no domain given for x2")
        self.assertSpecError(HEADER.replace('domain.x1 = -1, 1', 'domain.x1 = 1, -1') + 'g11 = "1"\n', None,
                             "degenerate domain")
        self.assertSpecError(HEADER.replace('domain.x1 = -1, 1', 'domain.x1 = -1') + 'g11 = "1"\n', 4, "two numbers")
        self.assertSpecError(HEADER.replace('[metric]', 'margin = 0.7\n[metric]') + 'g11 = "1"\n', 6)
        self.assertSpecError(HEADER.replace('x1, x2', 'x1, sin') + 'g11 = "1"\n', None, "invalid coordinate")

    def test_meta_validation(self):
        metric = self.repository.parse_text(HEADER + 'g11 = "1"\ng22 = "1"\n[meta]\nname = plane\nexpected = trivial_affine\n')
        self.assertEqual(metric.name, 'plane')
        self.assertEqual(metric.expected, 'trivial_affine')
        self.assertSpecError(HEADER + 'g11 = "1"\n[meta]\nexpected = maybe\n', 9, "invalid [meta]")

    def test_load_from_file(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'custom.metric')
            with open(path, 'w', encoding='utf-8') as handle:
                handle.write(HEADER + 'g11 = "exp(x2)"\ng22 = "1"\n')
            metric = self.repository.load_metric_spec(path)
            self.assertEqual(metric.name, 'custom')
            self.assertEqual(evaluate(metric.components[0][0], [0.0, 0.0]), 1.0)

    def test_file_that_is_not_utf8(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'binary.metric')
            with open(path, 'wb') as handle:
                handle.write(b'\xff\xfe\x00[chart]\n')
            with self.assertRaises(MetricSpecError) as ctx:
                self.repository.load_metric_spec(path)
            self.assertIn("UTF-8", str(ctx.exception))
            self.assertEqual(ctx.exception.path, path)

    def test_manifest_with_bad_exit_code(self):
        with tempfile.TemporaryDirectory() as directory:
            with open(os.path.join(directory, 'manifest.csv'), 'w', encoding='utf-8') as handle:
                handle.write(','.join(MANIFEST_COLUMNS) + '\n')
                handle.write('verify,flat2,flat2,trivial_affine,0,fine\n')
                handle.write('verify,flat2,flat2,trivial_affine,maybe,broken\n')
            with self.assertRaises(MetricSpecError) as ctx:
                MetricRepository(corpus_dir=directory).load_manifest()
            self.assertIn("manifest row 2", str(ctx.exception))
            self.assertIn("'maybe'", str(ctx.exception))


if __name__ == '__main__':
    unittest.main()
