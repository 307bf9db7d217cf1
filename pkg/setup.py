"""A setuptools based setup module.

See:
https://packaging.python.org/guides/distributing-packages-using-setuptools/
https://github.com/pypa/sampleproject
"""

from setuptools import setup, find_packages
import pathlib

here = pathlib.Path(__file__).parent.resolve()

long_description = (here / 'README.md').read_text(encoding='utf-8')

requirements = [
    'astropy',
    'django',
    'django-environ',
    'fastavro',
    'google-cloud-logging',
    'networkx',
    'numpy',
    'pandas>=1.5',  # read_csv on_bad_lines callables, to_csv lineterminator
    'scipy',
]

setup(
    name='dmf_poi',  # Required
    version='0.1.0',  # Required
    description='Decentralized matrix factorization simulator for POI recommendation',  # Optional
    long_description=long_description,  # Optional
    long_description_content_type='text/markdown',  # Optional (see note above)
    classifiers=[  # Optional
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
        'License :: OSI Approved :: GNU General Public License v3 or later (GPLv3+)',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3 :: Only',
    ],
    keywords='recommender systems, matrix factorization, decentralized learning, POI',
    packages=find_packages(),  # Required
    python_requires='>=3.8, <4',
    install_requires=requirements,  # Optional
    entry_points={  # Optional
        'console_scripts': [
            'dmf-poi=dmf_poi.cli:main',
        ],
    },
)
