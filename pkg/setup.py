#!/usr/bin/env python3
import sys

from setuptools import setup
from setuptools.command.test import test as TestCommand


# Load version
exec(open("fastgnh/version.py").read())


# Test Runner (reference: https://docs.pytest.org/en/latest/goodpractices.html)
class PyTest(TestCommand):
    user_options = [("pytest-args=", "a", "Arguments to pass to pytest")]

    def initialize_options(self):
        TestCommand.initialize_options(self)
        self.pytest_args = "--cov=fastgnh --cov-report=term"

    def run_tests(self):
        import shlex

        # import here, cause outside the eggs aren't loaded
        import pytest

        errno = pytest.main(shlex.split(self.pytest_args))
        sys.exit(errno)


# Test and Documentation dependencies
test_deps = [
    "coverage>=5, <8",
    "jsonschema>=3.2, <5",
    "mock>=4, <6",
    "pytest>=6, <8",
    "pytest-cov>=2.10, <5",
    "tox>=3.15, <5",
]

doc_deps = [
    "Sphinx>=4, <7",
    "mock>=4, <6",
    "sphinx_rtd_theme>=1, <2",
]

# Extra module dependencies
analysis_deps = ["pandas>=1.3, <3"]


setup(
    name="fastgnh",
    description="Fast exact and sampled Gauss-Newton Hessian entries with hierarchical compression",
    version=__version__,  # pylint: disable=undefined-variable
    packages=["fastgnh", "fastgnh.hmatrix", "fastgnh.analysis", "fastgnh.sampledata"],
    package_data={
        "fastgnh": ["templates/*.jinja"],
        "fastgnh.sampledata": ["_data/*.json"],
    },
    tests_require=test_deps,
    python_requires=">=3.8",
    install_requires=[
        "Click>=8.0,<8.2",
        "Jinja2>=3.0,<4",
        "numpy>=1.20,<2",
        "scipy>=1.7,<2",
    ],
    extras_require={
        "analysis": analysis_deps,
        "docs": doc_deps,
        "test": test_deps,
    },
    cmdclass={"pytest": PyTest},
    entry_points="""
        [console_scripts]
        fastgnh=fastgnh.cli:cli
    """,
    license="BSD",
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Operating System :: OS Independent",
        "Programming Language :: Python",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
)
