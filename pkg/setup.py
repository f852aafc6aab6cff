from setuptools import setup, find_packages

setup(
  name = 'jumpctl',
  packages = find_packages(exclude=('tests', 'tests.*')),
  install_requires = [
    'torch',
    'numpy',
    'scipy',
    'einops',
    'nflows',
    'typed-argument-parser',
    'GitPython',
  ],
  entry_points = {
    'console_scripts': ['jumpctl = jumpctl.cli:main'],
  },
)
