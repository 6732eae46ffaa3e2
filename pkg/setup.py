#!/usr/bin/env python

from setuptools import setup, find_packages

with open("README.md", "r") as fh:
    long_description = fh.read()

setup(name='lorawan-thermal-sim',
      version='0.3.1',
      description='Seeded LoRaWAN temperature-sensing simulator with Singer store export',
      long_description=long_description,
      long_description_content_type='text/markdown',
      author='Urban heat sensing group',
      classifiers=[
          'License :: OSI Approved :: GNU Affero General Public License v3',
          'Programming Language :: Python :: 3 :: Only'
      ],
      python_requires='>=3.7',
      install_requires=[
          'backoff==1.8.0',
          'pipelinewise-singer-python==1.2.0',
          'jsonlines==1.2.0',
          'pytz',
          'numpy>=1.20,<2',
          'pandas>=1.3,<3',
          'matplotlib>=3.4,<4'
      ],
      extras_require={
        'test': [
            'pylint==2.9.*',
            'pytest==6.2.*',
        ]
      },
      entry_points='''
          [console_scripts]
          lorawan-thermal=lorawan_thermal:main
      ''',
      packages=find_packages(exclude=['tests', 'tests.*']),
      package_data={
          'lorawan_thermal': [
              'schemas/*.json',
              'fixtures/*.ini'
          ]
      })
