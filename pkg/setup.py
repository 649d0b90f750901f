from setuptools import setup, find_packages

with open('README.md', 'r') as fh:
    long_description = fh.read()
    long_description = long_description.split('## Changelog')[0]
with open('CHANGELOG.md', 'r') as ch:
    long_description += "\n\n" + ch.read()

setup(
    name="silt-lab",
    version="0.1.0",
    description="Simulation and verification laboratory for self-intersection local times of lattice random walks.",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    install_requires=[
        "numpy < 2.0.0",
        "pandas >= 2.1",
        "pydantic >= 2.0",
        "scipy",
    ],
    extras_require={
        'test': [
            "pytest",
        ]
    },
    entry_points={
        'console_scripts': [
            'silt-lab=silt_lab.cli:main',
        ]
    },
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires='>=3.10',
)
