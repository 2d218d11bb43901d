# !/usr/bin/env python

from setuptools import setup
setup(
    name='excess_risk_lab',
    packages=['excess_risk_lab'],
    version='0.1.0',
    description='Monte-Carlo excess-risk lab for least-squares estimators on histogram and '
                'piecewise polynomial models',
    install_requires=[
        'numpy>=1.17',
        'scipy>=1.4',
    ],
    entry_points={
        'console_scripts': ['excess_risk_lab=excess_risk_lab.cli_report:main'],
    },
)
