from setuptools import setup

version = '0.1'

install_requires = [
    'numpy',
    'pandas>=1.5',
    'PyYAML',
    ]

setup_requires = [
    ]

tests_require = [
    'pytest',
    'mock',
    ]

setup(name='lesion_grading',
      version=version,
      description='Symbolic lesion features, grading and explanations '
                  'for diabetic retinopathy',
      long_description=open('README.rst').read(),
      packages=['lesion_grading',
                'lesion_grading.scripts',
                'lesion_grading.tests'],
      zip_safe=False,
      install_requires=install_requires,
      setup_requires=setup_requires,
      tests_require=tests_require,
      test_suite='lesion_grading.tests',
      entry_points="""\
      [console_scripts]
      lesion_grading = lesion_grading.scripts.grading:main
      """,
      )
