"""A setuptools based setup module."""

# Always prefer setuptools over distutils
from setuptools import setup, find_packages
# To use a consistent encoding
from codecs import open
from os import path

here = path.abspath(path.dirname(__file__))

# Get the long description from the README file
with open(path.join(here, 'README.md'), encoding='utf-8') as f:
    long_description = f.read()

with open(path.join(here, 'CHANGELOG.md'), encoding='utf-8') as f:
    long_description += f.read()

with open(path.join(here, 'VERSION'), encoding='utf-8') as f:
    version = f.read().strip()

setup(
    name='emofuse',
    version=version,
    description='Multimodal speech and text emotion recognition with late fusion',
    long_description=long_description,
    long_description_content_type='text/markdown',
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
        'Topic :: Multimedia :: Sound/Audio :: Speech',
        'Programming Language :: Python :: 3',
    ],
    keywords='emotion recognition speech text fusion spectrogram resnet transformer',
    packages=find_packages(exclude=['docs', 'tests', 'build', 'examples']),
    python_requires='>=3.7',
    install_requires=['numpy>=1.20', 'scipy>=1.4', 'scikit-learn>=0.22'],
    extras_require={
        'test': ['pytest', 'pytest-timeout'],
        'docs': ['sphinx', 'sphinx_rtd_theme'],
    },
    entry_points={
        'console_scripts': [
            'emofuse=EmoFuse.cli:main',
        ],
    },
)
