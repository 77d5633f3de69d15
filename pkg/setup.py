"""Setup script for the critical affine recursion toolkit."""

from setuptools import setup, find_packages

setup(
    name="affine-critical",
    version="0.1.0",
    description=(
        "Invariant Radon measure of the critical affine recursion "
        "X_n = A_n X_{n-1} + B_n: simulation, tail constants and potential theory"
    ),
    author="affine-critical developers",
    packages=find_packages(exclude=("tests", "tests.*", "examples", "examples.*")),
    python_requires=">=3.9",
    install_requires=[
        line.strip()
        for line in open("requirements.txt")
        if line.strip() and not line.startswith("#")
    ],
    entry_points={
        "console_scripts": [
            "affine-critical=src.pipeline.cli:cli",
        ],
    },
)
